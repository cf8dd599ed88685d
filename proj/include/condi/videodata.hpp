#ifndef CONDI_VIDEODATA_HPP
#define CONDI_VIDEODATA_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace condi {

// One video: (T, 3, H, W) pixels quantized to uint8 on disk and in memory,
// decoded to float [0,1] when clips are cut. The per-frame corruption mask is
// the generator's ground truth; it is block-aligned to clip boundaries.
struct Video {
    std::string id;
    int label = 0;
    int frames = 0; // T
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels; // T * 3 * H * W, row-major
    std::vector<std::uint8_t> corrupted_mask; // per frame, 0/1

    std::size_t frame_stride() const { return 3u * static_cast<std::size_t>(height) * width; }
};

struct Clip {
    std::vector<float> volume; // (L, 3, H, W) in [0,1]
    std::string source_video;
    int index = 0;
    int length = 0; // L
    int height = 0;
    int width = 0;
    bool corrupted = false;
    int padded_frames = 0;
};

struct ManifestEntry {
    std::string id;
    std::string path; // relative to the corpus directory
    int label = 0;
    std::vector<bool> clip_corrupted;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;
    int num_classes = 0;
    int clip_length = 0;
    std::uint64_t generator_seed = 0;
    int format_version = 1;
};

// Texture knobs for the generator. A clean video shows a group of bright
// shapes that all drift along the class direction. A corrupted block keeps
// the same background, noise and shape count but replaces the group with
// shapes that mostly follow one impostor class while one of them moves along
// yet another direction, so the block reads as the wrong class and is only
// recognizable by its mixed motion, not by its appearance.
struct TextureParams {
    double bg_level = 0.10;
    double clean_noise = 0.07;
    double corrupt_noise = 0.07;
    double shape_value = 0.95;
    double shape_size_frac = 0.22; // of frame size
    int occluder_count = 3;
};

struct GenParams {
    int num_videos = 0;
    int num_classes = 0;
    int frames_per_video = 0;
    int frame_size = 32; // H = W
    int clip_length = 16;
    double corrupt_prob = 0.0;
    std::uint64_t seed = 0;
    TextureParams texture;
};

// Class grid: up to 8 directions crossed with up to 2 speeds (C <= 16).
struct MotionClassGrid {
    int num_directions = 0;
    int num_speeds = 0;
    // (angle, speed in pixels/frame) for class c at the given frame size.
    void decode(int label, int frame_size, double& angle, double& speed) const;
    static MotionClassGrid for_classes(int num_classes);
};

DatasetManifest generate_corpus(const GenParams& params, const std::filesystem::path& directory);

std::vector<Clip> segment(const Video& video, int clip_length);

// One clip of the video; padding rules match segment().
Clip cut_clip(const Video& video, int index, int clip_length);

// Number of clips a T-frame video yields at clip length L.
inline int clip_count(int frames, int clip_length) {
    return (frames + clip_length - 1) / clip_length;
}

std::filesystem::path save_corpus(const DatasetManifest& manifest,
                                  const std::vector<Video>& videos,
                                  const std::filesystem::path& directory);
DatasetManifest load_corpus(const std::filesystem::path& directory);

Video load_video(const std::filesystem::path& corpus_dir, const ManifestEntry& entry);
std::vector<Video> load_videos(const std::filesystem::path& corpus_dir,
                               const DatasetManifest& manifest);

// FNV digest over the manifest and every referenced file, stable across runs.
std::string corpus_hash(const std::filesystem::path& directory);

} // namespace condi

#endif
