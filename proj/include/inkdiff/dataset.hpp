#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "inkdiff/rng.hpp"
#include "inkdiff/tensor.hpp"

namespace inkdiff {

struct StyleParams {
    std::string tag;      // "chinese" | "modern"
    int min_ridges = 3;
    int max_ridges = 5;
    double freq = 1.0;    // knot density multiplier for the ridgeline noise
    double contrast = 1.0;
    double fog = 0.5;     // how strongly far ridges fade toward the sky
    double edge = 1.0;    // soft-edge band width in pixels
    double texture = 4.0; // per-pixel grain sigma, in gray levels
};

StyleParams chinese_style(); // low contrast, soft fog
StyleParams modern_style();  // high contrast, sharp ridges

// the two class prompts; style tag must be one of the two
std::string class_prompt(const std::string& style);

struct ImageU8 {
    int h = 0, w = 0;
    std::vector<uint8_t> pixels; // row-major
    uint8_t& at(int y, int x) { return pixels[static_cast<size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return pixels[static_cast<size_t>(y) * w + x]; }
};

real normalize_px(int v);           // v/127.5 - 1; error outside [0,255]
Tensor normalize(const ImageU8& img);    // [1,h,w]
ImageU8 denormalize(const Tensor& t);    // [1,h,w] or [h,w]; round + clamp

void write_pgm(const std::string& path, const ImageU8& img);
ImageU8 read_pgm(const std::string& path);
ImageU8 contact_sheet(const std::vector<ImageU8>& images, int cols);

ImageU8 synth_image(const StyleParams& style, int size, RandomStream rs);

struct DatasetRecord {
    std::string file; // relative to manifest root
    std::string prompt;
    std::string style;
    uint64_t seed = 0;
    uint64_t hash = 0; // fnv1a64 of the file bytes
};

struct DatasetManifest {
    std::string root;
    int image_size = 32;
    std::string normalization = "x/127.5-1";
    std::vector<DatasetRecord> records;
};

// paper-ratio split of a total count: A = round(total * 1973/8308), rest B
std::pair<int, int> split_paper_ratio(int total);

// writes count_a chinese + count_b modern images and manifest.json
DatasetManifest synth_generate(int count_a, int count_b, int size, uint64_t seed,
                               const std::string& out_dir);

void save_manifest(const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& root);
void verify_manifest(const DatasetManifest& m); // throws DataError on any mismatch

struct Batch {
    Tensor x; // [n,1,s,s]
    std::vector<std::string> prompts;
};

// epoch-shuffled batches; the whole (filtered) dataset is held in memory.
// per-epoch order comes from stream.substream(epoch), so seek() is O(1)
// and resumed runs see exactly the batches of an uninterrupted one.
class BatchIterator {
public:
    BatchIterator(const DatasetManifest& m, int batch_size, RandomStream stream,
                  const std::string& class_filter = "");

    Batch next();
    int64_t step() const { return step_; }
    void seek(int64_t step);
    int dataset_size() const { return static_cast<int>(images_.size()); }
    int batches_per_epoch() const;

private:
    std::vector<Tensor> images_; // each [1,s,s]
    std::vector<std::string> prompts_;
    int batch_size_;
    RandomStream stream_;
    int64_t step_ = 0;
    std::vector<int> perm_;
    int64_t perm_epoch_ = -1;
    void ensure_perm(int64_t epoch);
};

} // namespace inkdiff
