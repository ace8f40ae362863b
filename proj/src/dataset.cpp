#include "inkdiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "inkdiff/errors.hpp"
#include "inkdiff/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace inkdiff {

StyleParams chinese_style() {
    StyleParams s;
    s.tag = "chinese";
    s.min_ridges = 3;
    s.max_ridges = 5;
    s.freq = 1.0;
    s.contrast = 0.55;
    s.fog = 0.85;
    s.edge = 2.5;
    s.texture = 2.5;
    return s;
}

StyleParams modern_style() {
    StyleParams s;
    s.tag = "modern";
    s.min_ridges = 3;
    s.max_ridges = 5;
    s.freq = 2.2;
    s.contrast = 1.25;
    s.fog = 0.30;
    s.edge = 0.35;
    s.texture = 6.0;
    return s;
}

std::string class_prompt(const std::string& style) {
    if (style == "chinese") return "A picture of Chinese Landscape Painting";
    if (style == "modern") return "A picture of Modern Landscape Painting";
    throw std::invalid_argument("class_prompt: unknown style " + style);
}

real normalize_px(int v) {
    if (v < 0 || v > 255) throw DataError("normalize: pixel outside [0,255]");
    return static_cast<real>(static_cast<double>(v) / 127.5 - 1.0);
}

Tensor normalize(const ImageU8& img) {
    Tensor t({1, img.h, img.w});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = normalize_px(img.pixels[static_cast<size_t>(i)]);
    return t;
}

ImageU8 denormalize(const Tensor& t) {
    int hdim, wdim;
    if (t.rank() == 3 && t.dim(0) == 1) {
        hdim = t.dim(1);
        wdim = t.dim(2);
    } else if (t.rank() == 2) {
        hdim = t.dim(0);
        wdim = t.dim(1);
    } else {
        throw std::invalid_argument("denormalize: expects [1,h,w] or [h,w], got " + shape_str(t.shape));
    }
    ImageU8 img;
    img.h = hdim;
    img.w = wdim;
    img.pixels.resize(static_cast<size_t>(hdim) * wdim);
    for (int64_t i = 0; i < t.numel(); ++i) {
        long v = std::lround((static_cast<double>(t[i]) + 1.0) * 127.5);
        img.pixels[static_cast<size_t>(i)] = static_cast<uint8_t>(std::clamp(v, 0L, 255L));
    }
    return img;
}

void write_pgm(const std::string& path, const ImageU8& img) {
    if (img.h < 1 || img.w < 1 || img.pixels.size() != static_cast<size_t>(img.h) * img.w)
        throw std::invalid_argument("write_pgm: malformed image");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("write_pgm: cannot open " + path);
    f << "P5\n" << img.w << " " << img.h << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!f) throw DataError("write_pgm: write failed for " + path);
}

namespace {

// next PNM header token, skipping whitespace and '#' comments
std::string pnm_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
        } else if (!std::isspace(c)) {
            tok += static_cast<char>(c);
            while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#') tok += static_cast<char>(in.get());
            return tok;
        }
    }
    throw DataError("read_pgm: truncated header");
}

int pnm_int(std::istream& in) {
    std::string tok = pnm_token(in);
    try {
        size_t used = 0;
        int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError("read_pgm: bad header token '" + tok + "'");
    }
}

} // namespace

ImageU8 read_pgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("read_pgm: cannot open " + path);
    if (pnm_token(f) != "P5") throw DataError("read_pgm: not a P5 file: " + path);
    ImageU8 img;
    img.w = pnm_int(f);
    img.h = pnm_int(f);
    int maxval = pnm_int(f);
    if (img.w < 1 || img.h < 1) throw DataError("read_pgm: bad dimensions in " + path);
    if (maxval != 255) throw DataError("read_pgm: unsupported maxval in " + path);
    f.get(); // single whitespace after maxval
    img.pixels.resize(static_cast<size_t>(img.h) * img.w);
    f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        throw DataError("read_pgm: truncated pixel data in " + path);
    return img;
}

ImageU8 contact_sheet(const std::vector<ImageU8>& images, int cols) {
    if (images.empty()) throw std::invalid_argument("contact_sheet: no images");
    if (cols < 1) throw std::invalid_argument("contact_sheet: cols must be >= 1");
    int h = images[0].h, w = images[0].w;
    for (const ImageU8& im : images)
        if (im.h != h || im.w != w) throw std::invalid_argument("contact_sheet: mixed image sizes");
    int n = static_cast<int>(images.size());
    int rows = (n + cols - 1) / cols;
    constexpr int kSep = 2;
    ImageU8 sheet;
    sheet.h = rows * h + (rows - 1) * kSep;
    sheet.w = cols * w + (cols - 1) * kSep;
    sheet.pixels.assign(static_cast<size_t>(sheet.h) * sheet.w, 0);
    for (int i = 0; i < n; ++i) {
        int r = i / cols, c = i % cols;
        int y0 = r * (h + kSep), x0 = c * (w + kSep);
        for (int y = 0; y < h; ++y)
            std::copy_n(images[static_cast<size_t>(i)].pixels.begin() + static_cast<size_t>(y) * w,
                        w, sheet.pixels.begin() + static_cast<size_t>(y0 + y) * sheet.w + x0);
    }
    return sheet;
}

namespace {

// 1-D value noise: cosine interpolation between uniformly spaced knots
struct ValueNoise1D {
    std::vector<double> knots;
    double at(double x) const {
        double u = std::clamp(x, 0.0, 1.0) * static_cast<double>(knots.size() - 1);
        size_t i = std::min(static_cast<size_t>(u), knots.size() - 2);
        double t = u - static_cast<double>(i);
        double tc = (1.0 - std::cos(t * 3.14159265358979323846)) * 0.5;
        return knots[i] * (1.0 - tc) + knots[i + 1] * tc;
    }
};

} // namespace

ImageU8 synth_image(const StyleParams& style, int size, RandomStream rs) {
    if (size < 8) throw std::invalid_argument("synth_image: size too small");
    int span = style.max_ridges - style.min_ridges;
    int nridges = style.min_ridges + (span > 0 ? static_cast<int>(rs.next_index(span + 1)) : 0);

    struct Ridge {
        ValueNoise1D noise;
        double base;
        double amp;
    };
    std::vector<Ridge> ridges(static_cast<size_t>(nridges));
    for (int k = 0; k < nridges; ++k) {
        Ridge& r = ridges[static_cast<size_t>(k)];
        int nknots = 3 + static_cast<int>(std::lround(style.freq * (2.0 + k)));
        r.noise.knots.resize(static_cast<size_t>(nknots));
        for (double& v : r.noise.knots) v = rs.next_uniform();
        double depth = (k + 0.5) / nridges; // 0 = far, 1 = near
        r.base = 0.30 + 0.52 * depth + (rs.next_uniform() - 0.5) * 0.06;
        r.amp = (0.06 + 0.08 * rs.next_uniform()) * (1.0 + 0.5 * depth);
    }

    ImageU8 img;
    img.h = size;
    img.w = size;
    img.pixels.resize(static_cast<size_t>(size) * size);

    constexpr double kRidgeBase = 40.0;
    constexpr double kFogWhite = 215.0;
    double edge = std::max(style.edge, 0.05);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double xf = size == 1 ? 0.0 : static_cast<double>(x) / (size - 1);
            double v = 232.0 - 18.0 * static_cast<double>(y) / (size - 1);
            for (int k = 0; k < nridges; ++k) {
                const Ridge& r = ridges[static_cast<size_t>(k)];
                double e = r.noise.at(xf);
                if (style.edge < 1.0) e = 1.0 - std::abs(2.0 * e - 1.0); // ridged profile
                double ytop = (r.base - r.amp * e) * (size - 1);
                double alpha = std::clamp((static_cast<double>(y) - ytop) / edge + 0.5, 0.0, 1.0);
                double fog_mix = style.fog * (1.0 - static_cast<double>(k + 1) / nridges);
                double color = kRidgeBase + (kFogWhite - kRidgeBase) * fog_mix;
                v = v * (1.0 - alpha) + color * alpha;
            }
            v = 128.0 + (v - 128.0) * style.contrast;
            img.at(y, x) = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    // grain, drawn row-major after all structural draws
    for (size_t i = 0; i < img.pixels.size(); ++i) {
        double v = static_cast<double>(img.pixels[i]) + style.texture * rs.next_normal();
        img.pixels[i] = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
    return img;
}

std::pair<int, int> split_paper_ratio(int total) {
    if (total < 2) throw std::invalid_argument("split_paper_ratio: total must be >= 2");
    int a = static_cast<int>(std::lround(static_cast<double>(total) * 1973.0 / 8308.0));
    a = std::clamp(a, 1, total - 1);
    return {a, total - a};
}

DatasetManifest synth_generate(int count_a, int count_b, int size, uint64_t seed,
                               const std::string& out_dir) {
    if (count_a < 1 || count_b < 1) throw std::invalid_argument("synth_generate: counts must be >= 1");
    if (size != 16 && size != 32 && size != 64)
        throw std::invalid_argument("synth_generate: size must be 16, 32 or 64");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec || !fs::is_directory(out_dir)) throw DataError("synth_generate: cannot create " + out_dir);

    DatasetManifest m;
    m.root = out_dir;
    m.image_size = size;

    int index = 0;
    auto emit = [&](const StyleParams& style, int count) {
        for (int i = 0; i < count; ++i, ++index) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%05d.pgm", style.tag.c_str(), i);
            ImageU8 img = synth_image(style, size, RandomStream(seed, static_cast<uint64_t>(index)));
            std::string path = out_dir + "/" + name;
            write_pgm(path, img);
            DatasetRecord rec;
            rec.file = name;
            rec.prompt = class_prompt(style.tag);
            rec.style = style.tag;
            rec.seed = static_cast<uint64_t>(index);
            rec.hash = hash_file(path);
            m.records.push_back(std::move(rec));
        }
    };
    emit(chinese_style(), count_a);
    emit(modern_style(), count_b);
    save_manifest(m);
    return m;
}

void save_manifest(const DatasetManifest& m) {
    json j;
    j["image_size"] = m.image_size;
    j["normalization"] = m.normalization;
    j["records"] = json::array();
    for (const DatasetRecord& r : m.records) {
        j["records"].push_back({{"file", r.file},
                                {"prompt", r.prompt},
                                {"style", r.style},
                                {"seed", r.seed},
                                {"hash", hash_hex(r.hash)}});
    }
    std::ofstream f(m.root + "/manifest.json");
    if (!f) throw DataError("save_manifest: cannot write " + m.root + "/manifest.json");
    f << j.dump(2) << "\n";
}

DatasetManifest load_manifest(const std::string& root) {
    std::ifstream f(root + "/manifest.json");
    if (!f) throw DataError("load_manifest: cannot open " + root + "/manifest.json");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw DataError(std::string("load_manifest: bad JSON: ") + e.what());
    }
    DatasetManifest m;
    m.root = root;
    try {
        m.image_size = j.at("image_size").get<int>();
        m.normalization = j.at("normalization").get<std::string>();
        for (const json& rj : j.at("records")) {
            DatasetRecord r;
            r.file = rj.at("file").get<std::string>();
            r.prompt = rj.at("prompt").get<std::string>();
            r.style = rj.at("style").get<std::string>();
            r.seed = rj.at("seed").get<uint64_t>();
            r.hash = parse_hash_hex(rj.at("hash").get<std::string>());
            m.records.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("load_manifest: missing field: ") + e.what());
    }
    return m;
}

void verify_manifest(const DatasetManifest& m) {
    if (m.records.empty()) throw DataError("verify_manifest: no records");
    for (const DatasetRecord& r : m.records) {
        std::string path = m.root + "/" + r.file;
        uint64_t h = hash_file(path); // throws if missing
        if (h != r.hash) throw DataError("verify_manifest: hash mismatch for " + r.file);
        ImageU8 img = read_pgm(path);
        if (img.h != m.image_size || img.w != m.image_size)
            throw DataError("verify_manifest: size mismatch for " + r.file);
        if (r.style != "chinese" && r.style != "modern" && r.style != "prior")
            throw DataError("verify_manifest: unknown style tag in " + r.file);
    }
}

BatchIterator::BatchIterator(const DatasetManifest& m, int batch_size, RandomStream stream,
                             const std::string& class_filter)
    : batch_size_(batch_size), stream_(stream) {
    if (batch_size < 1) throw std::invalid_argument("batch_iter: batch size must be >= 1");
    for (const DatasetRecord& r : m.records) {
        if (!class_filter.empty() && r.style != class_filter) continue;
        images_.push_back(normalize(read_pgm(m.root + "/" + r.file)));
        prompts_.push_back(r.prompt);
    }
    if (images_.empty()) throw DataError("batch_iter: dataset empty after filter '" + class_filter + "'");
}

int BatchIterator::batches_per_epoch() const {
    int n = dataset_size();
    return (n + batch_size_ - 1) / batch_size_;
}

void BatchIterator::ensure_perm(int64_t epoch) {
    if (perm_epoch_ == epoch) return;
    perm_.resize(images_.size());
    for (size_t i = 0; i < perm_.size(); ++i) perm_[i] = static_cast<int>(i);
    RandomStream es = stream_.substream(static_cast<uint64_t>(epoch));
    es.shuffle(perm_);
    perm_epoch_ = epoch;
}

Batch BatchIterator::next() {
    int bpe = batches_per_epoch();
    int64_t epoch = step_ / bpe;
    int pos = static_cast<int>(step_ % bpe);
    ensure_perm(epoch);
    int n = dataset_size();
    int lo = pos * batch_size_;
    int hi = std::min(n, lo + batch_size_);
    int m = hi - lo;
    const Tensor& first = images_[0];
    Batch b;
    b.x = Tensor({m, first.dim(0), first.dim(1), first.dim(2)});
    int64_t chw = first.numel();
    for (int i = 0; i < m; ++i) {
        int src = perm_[static_cast<size_t>(lo + i)];
        std::copy(images_[static_cast<size_t>(src)].data.begin(),
                  images_[static_cast<size_t>(src)].data.end(), b.x.data.begin() + i * chw);
        b.prompts.push_back(prompts_[static_cast<size_t>(src)]);
    }
    ++step_;
    return b;
}

void BatchIterator::seek(int64_t step) {
    if (step < 0) throw std::invalid_argument("batch_iter: negative step");
    step_ = step;
}

} // namespace inkdiff
