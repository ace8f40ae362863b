#include "inkdiff/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "inkdiff/errors.hpp"
#include "inkdiff/hash.hpp"

static_assert(std::endian::native == std::endian::little,
              "PDIF1 writes raw little-endian floats");

using nlohmann::json;

namespace inkdiff {

namespace {

constexpr char kMagic[5] = {'P', 'D', 'I', 'F', '1'};

void write_u64(std::ostream& f, uint64_t v) {
    f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint64_t read_u64(std::istream& f) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!f) throw DataError("checkpoint: truncated header");
    return v;
}

std::string read_block(std::istream& f, uint64_t len, const char* what) {
    if (len > (1ull << 31)) throw DataError(std::string("checkpoint: absurd ") + what + " length");
    std::string s(static_cast<size_t>(len), '\0');
    f.read(s.data(), static_cast<std::streamsize>(len));
    if (!f) throw DataError(std::string("checkpoint: truncated ") + what);
    return s;
}

json meta_to_json(const CheckpointMeta& m) {
    json j;
    j["kind"] = m.kind;
    j["config"] = m.config;
    j["vocab"] = m.vocab;
    j["schedule"] = m.schedule;
    j["step"] = m.step;
    j["base_hash"] = m.base_hash;
    j["extra"] = m.extra;
    return j;
}

CheckpointMeta meta_from_json(const json& j) {
    CheckpointMeta m;
    try {
        m.kind = j.at("kind").get<std::string>();
        m.config = j.at("config");
        m.vocab = j.at("vocab").get<std::vector<std::string>>();
        m.schedule = j.at("schedule");
        m.step = j.at("step").get<int64_t>();
        m.base_hash = j.at("base_hash").get<std::string>();
        m.extra = j.at("extra");
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: bad metadata: ") + e.what());
    }
    static const std::vector<std::string> kinds = {"denoiser", "autoencoder", "classifier",
                                                   "lora-adapter"};
    if (std::find(kinds.begin(), kinds.end(), m.kind) == kinds.end())
        throw DataError("checkpoint: unknown kind '" + m.kind + "'");
    return m;
}

std::vector<float> to_f32(const Tensor& t) {
    std::vector<float> out(static_cast<size_t>(t.numel()));
    for (int64_t i = 0; i < t.numel(); ++i) out[static_cast<size_t>(i)] = static_cast<float>(t[i]);
    return out;
}

} // namespace

void save_checkpoint(const ModelParams& params, const CheckpointMeta& meta,
                     const std::string& path) {
    json manifest = json::array();
    uint64_t offset = 0;
    for (const auto& [name, node] : params) {
        manifest.push_back(
            {{"name", name}, {"shape", node->value.shape}, {"offset", offset}});
        offset += static_cast<uint64_t>(node->value.numel()) * 4;
    }
    std::string meta_s = meta_to_json(meta).dump();
    std::string man_s = manifest.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot write " + path);
    f.write(kMagic, sizeof(kMagic));
    write_u64(f, meta_s.size());
    f.write(meta_s.data(), static_cast<std::streamsize>(meta_s.size()));
    write_u64(f, man_s.size());
    f.write(man_s.data(), static_cast<std::streamsize>(man_s.size()));
    write_u64(f, offset);
    for (const auto& [name, node] : params) {
        std::vector<float> buf = to_f32(node->value);
        f.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * 4));
    }
    if (!f) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("checkpoint: cannot open " + path);
    char magic[5];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("checkpoint: bad magic in " + path);

    json meta_j, man_j;
    try {
        meta_j = json::parse(read_block(f, read_u64(f), "metadata"));
        man_j = json::parse(read_block(f, read_u64(f), "manifest"));
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: bad JSON block: ") + e.what());
    }
    uint64_t data_len = read_u64(f);
    std::string data = read_block(f, data_len, "tensor data");
    // must be the end of the file
    if (f.peek() != std::char_traits<char>::eof())
        throw DataError("checkpoint: trailing bytes in " + path);

    Checkpoint ck;
    ck.meta = meta_from_json(meta_j);
    if (!man_j.is_array()) throw DataError("checkpoint: manifest is not an array");
    struct Entry {
        std::string name;
        std::vector<int> shape;
        uint64_t offset, size;
    };
    std::vector<Entry> entries;
    for (const json& ej : man_j) {
        Entry e;
        try {
            e.name = ej.at("name").get<std::string>();
            e.shape = ej.at("shape").get<std::vector<int>>();
            e.offset = ej.at("offset").get<uint64_t>();
        } catch (const json::exception& ex) {
            throw DataError(std::string("checkpoint: bad manifest entry: ") + ex.what());
        }
        e.size = static_cast<uint64_t>(shape_numel(e.shape)) * 4;
        if (e.offset > data_len || e.offset + e.size > data_len)
            throw DataError("checkpoint: manifest entry out of bounds: " + e.name);
        entries.push_back(std::move(e));
    }
    std::vector<const Entry*> sorted;
    for (const Entry& e : entries) sorted.push_back(&e);
    std::sort(sorted.begin(), sorted.end(),
              [](const Entry* a, const Entry* b) { return a->offset < b->offset; });
    for (size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->offset < sorted[i - 1]->offset + sorted[i - 1]->size)
            throw DataError("checkpoint: overlapping tensors in manifest");

    for (const Entry& e : entries) {
        Tensor t(e.shape);
        const float* src = reinterpret_cast<const float*>(data.data() + e.offset);
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<real>(src[i]);
        if (ck.params.count(e.name)) throw DataError("checkpoint: duplicate tensor " + e.name);
        ck.params.emplace(e.name, ag::leaf(std::move(t), false));
    }
    return ck;
}

uint64_t params_content_hash(const ModelParams& params) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& [name, node] : params) {
        h = fnv1a64(name.data(), name.size(), h);
        for (int d : node->value.shape) {
            int32_t v = d;
            h = fnv1a64(&v, sizeof(v), h);
        }
        std::vector<float> buf(static_cast<size_t>(node->value.numel()));
        for (int64_t i = 0; i < node->value.numel(); ++i)
            buf[static_cast<size_t>(i)] = static_cast<float>(node->value[i]);
        h = fnv1a64(buf.data(), buf.size() * 4, h);
    }
    return h;
}

ModelParams merge_opt_state(const ModelParams& params, const AdamState& st) {
    ModelParams out;
    for (const auto& [name, node] : params) out.emplace(name, node);
    for (const auto& [name, t] : st.m) out.emplace("opt.m." + name, ag::leaf(t, false));
    for (const auto& [name, t] : st.v) out.emplace("opt.v." + name, ag::leaf(t, false));
    return out;
}

AdamState split_opt_state(ModelParams& mixed) {
    AdamState st;
    for (auto it = mixed.begin(); it != mixed.end();) {
        if (it->first.rfind("opt.m.", 0) == 0) {
            st.m.emplace(it->first.substr(6), it->second->value);
            it = mixed.erase(it);
        } else if (it->first.rfind("opt.v.", 0) == 0) {
            st.v.emplace(it->first.substr(6), it->second->value);
            it = mixed.erase(it);
        } else {
            ++it;
        }
    }
    return st;
}

} // namespace inkdiff
