#include "condi/videodata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "condi/array_io.hpp"
#include "condi/common.hpp"
#include "condi/hash.hpp"
#include "condi/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace condi {

MotionClassGrid MotionClassGrid::for_classes(int num_classes) {
    MotionClassGrid g;
    if (num_classes <= 8) {
        g.num_directions = num_classes;
        g.num_speeds = 1;
    } else {
        g.num_directions = 8;
        g.num_speeds = 2;
    }
    return g;
}

void MotionClassGrid::decode(int label, int frame_size, double& angle, double& speed) const {
    const int dir = label % num_directions;
    const int speed_idx = label / num_directions;
    angle = 2.0 * M_PI * dir / num_directions;
    // Slow classes traverse ~4/5 of the frame over a 16-frame clip.
    const double base = 0.05 * frame_size;
    speed = base * (1 + speed_idx);
}

namespace {

constexpr const char* kManifestName = "manifest.jsonl";

enum class ShapeKind { square, disc, diamond };

struct MovingShape {
    ShapeKind kind;
    double cx, cy;    // start position
    double vx, vy;    // pixels per frame
    double radius;    // half-extent
    double rgb[3];    // per-channel value
};

void draw_shape(std::vector<double>& frame, int size, const MovingShape& s, double t) {
    const double cx = s.cx + s.vx * t;
    const double cy = s.cy + s.vy * t;
    const int r = static_cast<int>(std::ceil(s.radius));
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
            bool inside = false;
            switch (s.kind) {
            case ShapeKind::square: inside = std::abs(dx) <= s.radius && std::abs(dy) <= s.radius; break;
            case ShapeKind::disc: inside = dx * dx + dy * dy <= s.radius * s.radius; break;
            case ShapeKind::diamond: inside = std::abs(dx) + std::abs(dy) <= s.radius; break;
            }
            if (!inside) {
                continue;
            }
            // Torus wrap keeps the shape in frame for any trajectory.
            const int px = ((static_cast<int>(std::lround(cx)) + dx) % size + size) % size;
            const int py = ((static_cast<int>(std::lround(cy)) + dy) % size + size) % size;
            for (int c = 0; c < 3; ++c) {
                frame[static_cast<std::size_t>(c) * size * size + py * static_cast<std::size_t>(size) + px] = s.rgb[c];
            }
        }
    }
}

std::string video_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "vid_%05d", index);
    return std::string(buf);
}

Video make_video(const GenParams& p, int index) {
    Rng rng(hash_combine(p.seed, static_cast<std::uint64_t>(index)));
    const int size = p.frame_size;
    const int T = p.frames_per_video;
    const auto& tex = p.texture;
    const MotionClassGrid grid = MotionClassGrid::for_classes(p.num_classes);

    Video v;
    v.id = video_id(index);
    v.label = index % p.num_classes;
    v.frames = T;
    v.height = size;
    v.width = size;
    v.pixels.resize(static_cast<std::size_t>(T) * 3 * size * size);
    v.corrupted_mask.assign(static_cast<std::size_t>(T), 0);

    double angle, speed;
    grid.decode(v.label, size, angle, speed);

    // Clean frames show a troupe of shapes that all drift along the class
    // direction at slightly different paces.
    std::vector<MovingShape> troupe(static_cast<std::size_t>(tex.occluder_count));
    for (auto& s : troupe) {
        s.kind = static_cast<ShapeKind>(rng.below_int(3));
        const double pace = speed * rng.uniform(0.75, 1.25);
        s.vx = pace * std::cos(angle);
        s.vy = pace * std::sin(angle);
        s.cx = rng.uniform(0.0, size);
        s.cy = rng.uniform(0.0, size);
        s.radius = 0.5 * tex.shape_size_frac * size * rng.uniform(0.85, 1.15);
        for (double& ch : s.rgb) {
            ch = tex.shape_value * rng.uniform(0.85, 1.0);
        }
    }

    double bg_tint[3];
    for (double& ch : bg_tint) {
        ch = rng.uniform(0.75, 1.0);
    }

    const int num_blocks = clip_count(T, p.clip_length);
    std::vector<bool> block_corrupted(static_cast<std::size_t>(num_blocks));
    for (int b = 0; b < num_blocks; ++b) {
        block_corrupted[static_cast<std::size_t>(b)] = rng.uniform() < p.corrupt_prob;
    }

    // A corrupted block replaces the troupe with shapes of identical count,
    // size and palette, so its appearance statistics match a clean block.
    // Most replacements follow one impostor class that is fixed per video,
    // which makes corrupted clips vote coherently for one wrong answer
    // instead of cancelling out under aggregation; the last shape dissents
    // along a different direction, so the block mixes two motion classes
    // where a clean block only ever shows one. The impostor may coincide
    // with the true label, in which case the block happens to tell the truth.
    const int impostor = rng.below_int(p.num_classes);
    std::vector<std::vector<MovingShape>> occluders(static_cast<std::size_t>(num_blocks));
    for (int b = 0; b < num_blocks; ++b) {
        if (!block_corrupted[static_cast<std::size_t>(b)]) {
            continue;
        }
        double fake_angle, fake_speed;
        grid.decode(impostor, size, fake_angle, fake_speed);
        auto& group = occluders[static_cast<std::size_t>(b)];
        group.resize(static_cast<std::size_t>(tex.occluder_count));
        for (std::size_t i = 0; i < group.size(); ++i) {
            MovingShape& occ = group[i];
            double occ_angle = fake_angle;
            double occ_speed = fake_speed;
            if (i + 1 == group.size()) {
                int dissent = rng.below_int(p.num_classes);
                while (dissent == impostor) {
                    dissent = rng.below_int(p.num_classes);
                }
                grid.decode(dissent, size, occ_angle, occ_speed);
            }
            occ.kind = static_cast<ShapeKind>(rng.below_int(3));
            const double pace = occ_speed * rng.uniform(0.75, 1.25);
            occ.vx = pace * std::cos(occ_angle);
            occ.vy = pace * std::sin(occ_angle);
            occ.cx = rng.uniform(0.0, size);
            occ.cy = rng.uniform(0.0, size);
            occ.radius = 0.5 * tex.shape_size_frac * size * rng.uniform(0.85, 1.15);
            for (double& ch : occ.rgb) {
                ch = tex.shape_value * rng.uniform(0.85, 1.0);
            }
        }
    }

    std::vector<double> frame(3u * size * size);
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (int t = 0; t < T; ++t) {
        const int block = t / p.clip_length;
        const bool corrupted = block_corrupted[static_cast<std::size_t>(block)];
        v.corrupted_mask[static_cast<std::size_t>(t)] = corrupted ? 1 : 0;
        if (corrupted) {
            for (std::size_t i = 0; i < plane; ++i) {
                const double base = tex.bg_level + tex.corrupt_noise * rng.uniform();
                for (int c = 0; c < 3; ++c) {
                    frame[c * plane + i] = base * bg_tint[c];
                }
            }
            const double local_t = t - block * p.clip_length;
            for (const auto& occ : occluders[static_cast<std::size_t>(block)]) {
                draw_shape(frame, size, occ, local_t);
            }
        } else {
            for (std::size_t i = 0; i < plane; ++i) {
                const double base = tex.bg_level + tex.clean_noise * rng.uniform();
                for (int c = 0; c < 3; ++c) {
                    frame[c * plane + i] = base * bg_tint[c];
                }
            }
            for (const auto& s : troupe) {
                draw_shape(frame, size, s, t);
            }
        }
        std::uint8_t* out = v.pixels.data() + static_cast<std::size_t>(t) * v.frame_stride();
        for (std::size_t i = 0; i < frame.size(); ++i) {
            const double clamped = std::clamp(frame[i], 0.0, 1.0);
            out[i] = static_cast<std::uint8_t>(std::lround(clamped * 255.0));
        }
    }
    return v;
}

void validate(const GenParams& p) {
    if (p.num_classes < 2 || p.num_classes > 16) {
        throw ConfigError("num_classes must be in [2, 16]");
    }
    if (p.corrupt_prob < 0.0 || p.corrupt_prob >= 1.0) {
        throw ConfigError("corrupt_prob must be in [0, 1)");
    }
    if (p.frame_size < 16) {
        throw ConfigError("frame_size must be >= 16");
    }
    if (p.clip_length < 1) {
        throw ConfigError("clip_length must be >= 1");
    }
    if (p.frames_per_video < p.clip_length) {
        throw ConfigError("frames_per_video must cover at least one clip");
    }
    if (p.num_videos < 1) {
        throw ConfigError("num_videos must be >= 1");
    }
}

ArrayU8 to_array(const Video& v) {
    ArrayU8 a;
    a.dims = {static_cast<std::uint32_t>(v.frames), 3u, static_cast<std::uint32_t>(v.height),
              static_cast<std::uint32_t>(v.width)};
    a.data = v.pixels;
    return a;
}

} // namespace

DatasetManifest generate_corpus(const GenParams& params, const fs::path& directory) {
    validate(params);
    std::error_code ec;
    fs::create_directories(directory / "videos", ec);
    if (ec || !fs::is_directory(directory)) {
        throw DataError("output directory is not writable: " + directory.string());
    }

    DatasetManifest manifest;
    manifest.num_classes = params.num_classes;
    manifest.clip_length = params.clip_length;
    manifest.generator_seed = params.seed;

    for (int i = 0; i < params.num_videos; ++i) {
        Video v = make_video(params, i);
        ManifestEntry entry;
        entry.id = v.id;
        entry.path = "videos/" + v.id + ".cdar";
        entry.label = v.label;
        const auto clips = clip_count(v.frames, params.clip_length);
        entry.clip_corrupted.resize(static_cast<std::size_t>(clips));
        for (int c = 0; c < clips; ++c) {
            entry.clip_corrupted[static_cast<std::size_t>(c)] =
                v.corrupted_mask[static_cast<std::size_t>(c) * params.clip_length] != 0;
        }
        save_array(directory / entry.path, to_array(v));
        manifest.entries.push_back(std::move(entry));
    }

    std::ofstream out(directory / kManifestName, std::ios::binary);
    if (!out) {
        throw DataError("cannot write manifest in " + directory.string());
    }
    json header = {{"format_version", manifest.format_version},
                   {"num_classes", manifest.num_classes},
                   {"clip_length", manifest.clip_length},
                   {"seed", manifest.generator_seed}};
    out << header.dump() << "\n";
    for (const auto& e : manifest.entries) {
        json row = {{"id", e.id},
                    {"path", e.path},
                    {"label", e.label},
                    {"clip_corrupted", e.clip_corrupted}};
        out << row.dump() << "\n";
    }
    if (!out) {
        throw DataError("manifest write failed in " + directory.string());
    }
    return manifest;
}

Clip cut_clip(const Video& video, int index, int clip_length) {
    if (clip_length < 1) {
        throw ConfigError("clip_length must be >= 1");
    }
    const int n = clip_count(video.frames, clip_length);
    if (index < 0 || index >= n) {
        throw DataError("clip index " + std::to_string(index) + " out of range for video '" +
                        video.id + "'");
    }
    const std::size_t stride = video.frame_stride();
    Clip clip;
    clip.source_video = video.id;
    clip.index = index;
    clip.length = clip_length;
    clip.height = video.height;
    clip.width = video.width;
    clip.volume.resize(static_cast<std::size_t>(clip_length) * stride);
    const int first = index * clip_length;
    const int real = std::min(clip_length, video.frames - first);
    clip.padded_frames = clip_length - real;
    for (int f = 0; f < clip_length; ++f) {
        // The last clip repeats its final real frame.
        const int src = first + std::min(f, real - 1);
        const std::uint8_t* in = video.pixels.data() + static_cast<std::size_t>(src) * stride;
        float* out = clip.volume.data() + static_cast<std::size_t>(f) * stride;
        for (std::size_t k = 0; k < stride; ++k) {
            out[k] = static_cast<float>(in[k]) / 255.0f;
        }
        if (f < real && video.corrupted_mask[static_cast<std::size_t>(src)]) {
            clip.corrupted = true;
        }
    }
    return clip;
}

std::vector<Clip> segment(const Video& video, int clip_length) {
    if (clip_length < 1) {
        throw ConfigError("clip_length must be >= 1");
    }
    const int n = clip_count(video.frames, clip_length);
    std::vector<Clip> clips;
    clips.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        clips.push_back(cut_clip(video, i, clip_length));
    }
    return clips;
}

fs::path save_corpus(const DatasetManifest& manifest, const std::vector<Video>& videos,
                     const fs::path& directory) {
    if (manifest.entries.size() != videos.size()) {
        throw DataError("manifest entries do not match the video list");
    }
    std::error_code ec;
    fs::create_directories(directory / "videos", ec);
    if (ec || !fs::is_directory(directory)) {
        throw DataError("output directory is not writable: " + directory.string());
    }
    for (std::size_t i = 0; i < videos.size(); ++i) {
        save_array(directory / manifest.entries[i].path, to_array(videos[i]));
    }
    std::ofstream out(directory / kManifestName, std::ios::binary);
    if (!out) {
        throw DataError("cannot write manifest in " + directory.string());
    }
    json header = {{"format_version", manifest.format_version},
                   {"num_classes", manifest.num_classes},
                   {"clip_length", manifest.clip_length},
                   {"seed", manifest.generator_seed}};
    out << header.dump() << "\n";
    for (const auto& e : manifest.entries) {
        json row = {{"id", e.id},
                    {"path", e.path},
                    {"label", e.label},
                    {"clip_corrupted", e.clip_corrupted}};
        out << row.dump() << "\n";
    }
    return directory / kManifestName;
}

DatasetManifest load_corpus(const fs::path& directory) {
    const fs::path manifest_path = directory / kManifestName;
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) {
        throw DataError("missing manifest: " + manifest_path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("missing manifest header: " + manifest_path.string());
    }
    DatasetManifest manifest;
    try {
        json header = json::parse(line);
        manifest.format_version = header.at("format_version").get<int>();
        manifest.num_classes = header.at("num_classes").get<int>();
        manifest.clip_length = header.at("clip_length").get<int>();
        manifest.generator_seed = header.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw DataError("malformed manifest header in " + manifest_path.string() + ": " +
                        e.what());
    }
    if (manifest.format_version != 1) {
        throw DataError("unsupported manifest version in " + manifest_path.string());
    }
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        try {
            json row = json::parse(line);
            ManifestEntry e;
            e.id = row.at("id").get<std::string>();
            e.path = row.at("path").get<std::string>();
            e.label = row.at("label").get<int>();
            e.clip_corrupted = row.at("clip_corrupted").get<std::vector<bool>>();
            manifest.entries.push_back(std::move(e));
        } catch (const json::exception& e) {
            throw DataError("malformed manifest row in " + manifest_path.string() + ": " +
                            e.what());
        }
    }
    if (manifest.entries.empty()) {
        throw DataError("manifest has no entries: " + manifest_path.string());
    }
    for (const auto& e : manifest.entries) {
        const fs::path file = directory / e.path;
        std::ifstream probe(file, std::ios::binary);
        if (!probe) {
            throw DataError("manifest references a missing file: " + file.string());
        }
        const ArrayInfo info = peek_info(probe, file.string());
        if (info.dtype != Dtype::u8 || info.dims.size() != 4 || info.dims[1] != 3) {
            throw DataError("manifest/file mismatch (unexpected array shape): " + file.string());
        }
        if (e.label >= manifest.num_classes || e.label < 0) {
            throw DataError("manifest/file mismatch (label out of range) for " + e.id);
        }
        const int n = clip_count(static_cast<int>(info.dims[0]), manifest.clip_length);
        if (static_cast<int>(e.clip_corrupted.size()) != n) {
            throw DataError("manifest/file mismatch (clip flag count) for " + file.string());
        }
    }
    return manifest;
}

Video load_video(const fs::path& corpus_dir, const ManifestEntry& entry) {
    ArrayU8 a = load_array_u8(corpus_dir / entry.path);
    if (a.dims.size() != 4 || a.dims[1] != 3) {
        throw DataError("unexpected video shape in " + (corpus_dir / entry.path).string());
    }
    Video v;
    v.id = entry.id;
    v.label = entry.label;
    v.frames = static_cast<int>(a.dims[0]);
    v.height = static_cast<int>(a.dims[2]);
    v.width = static_cast<int>(a.dims[3]);
    v.pixels = std::move(a.data);
    // The per-frame mask needs the clip length; load_videos fills it in.
    v.corrupted_mask.assign(static_cast<std::size_t>(v.frames), 0);
    return v;
}

std::vector<Video> load_videos(const fs::path& corpus_dir, const DatasetManifest& manifest) {
    std::vector<Video> videos;
    videos.reserve(manifest.entries.size());
    for (const auto& e : manifest.entries) {
        Video v = load_video(corpus_dir, e);
        for (int t = 0; t < v.frames; ++t) {
            const int block = t / manifest.clip_length;
            v.corrupted_mask[static_cast<std::size_t>(t)] =
                e.clip_corrupted[static_cast<std::size_t>(block)] ? 1 : 0;
        }
        videos.push_back(std::move(v));
    }
    return videos;
}

std::string corpus_hash(const fs::path& directory) {
    Fnv64 h;
    const std::string manifest_digest = hash_file(directory / kManifestName);
    h.update(manifest_digest);
    const DatasetManifest manifest = load_corpus(directory);
    for (const auto& e : manifest.entries) {
        h.update(hash_file(directory / e.path));
    }
    return h.hex();
}

} // namespace condi
