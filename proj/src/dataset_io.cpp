#include "streampoint/dataset_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian and this code writes raw memory");

namespace streampoint::gen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string frame_name(const char* stem, int index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04d.%s", stem, index, ext);
    return buf;
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", v);
    return buf;
}

json pose_to_json(const geo::CameraPose& p) {
    return json{{"q", {p.q.w, p.q.x, p.q.y, p.q.z}},
                {"tau", {p.tau.x(), p.tau.y(), p.tau.z()}},
                {"f", {p.f.x(), p.f.y()}}};
}

geo::CameraPose pose_from_json(const json& j) {
    auto q = j.at("q");
    auto tau = j.at("tau");
    auto f = j.at("f");
    if (q.size() != 4 || tau.size() != 3 || f.size() != 2)
        throw FormatError("pose json: bad field sizes");
    return geo::CameraPose(
        geo::Quat::from_wxyz(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                             q[3].get<double>()),
        geo::Vector3d(tau[0].get<double>(), tau[1].get<double>(), tau[2].get<double>()),
        geo::Vector2d(f[0].get<double>(), f[1].get<double>()));
}

std::vector<std::uint8_t> float_bytes(const std::vector<float>& v) {
    std::vector<std::uint8_t> out(v.size() * 4);
    std::memcpy(out.data(), v.data(), out.size());
    return out;
}

std::vector<float> bytes_to_floats(const std::vector<std::uint8_t>& b, std::size_t expect,
                                   const std::string& name) {
    if (b.size() != expect * 4)
        throw FormatError("truncated or oversized float payload in " + name);
    std::vector<float> out(expect);
    std::memcpy(out.data(), b.data(), b.size());
    return out;
}

}  // namespace

void write_file_bytes(const fs::path& p, const void* data, std::size_t len) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for write: " + p.string());
    f.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    f.flush();
    if (!f) throw IoError("write failed: " + p.string());
}

std::vector<std::uint8_t> read_file_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("cannot open: " + p.string());
    auto len = static_cast<std::size_t>(f.tellg());
    f.seekg(0);
    std::vector<std::uint8_t> out(len);
    if (len) f.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(len));
    if (!f) throw IoError("read failed: " + p.string());
    return out;
}

std::vector<std::uint8_t> encode_ppm(const std::vector<float>& rgb, int h, int w) {
    if (rgb.size() != static_cast<std::size_t>(h) * w * 3) throw ShapeError("encode_ppm: size");
    std::string header = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.reserve(out.size() + rgb.size());
    for (float v : rgb) {
        long q = std::lround(std::clamp(v, 0.f, 1.f) * 255.f);
        out.push_back(static_cast<std::uint8_t>(std::clamp(q, 0l, 255l)));
    }
    return out;
}

std::vector<float> decode_ppm(const std::vector<std::uint8_t>& bytes, int* h, int* w) {
    // Strict subset of P6: exactly the header layout encode_ppm emits.
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
        throw FormatError("ppm: bad magic");
    std::size_t pos = 2;
    auto skip_ws = [&] {
        while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    };
    auto read_int = [&]() -> int {
        skip_ws();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) throw FormatError("ppm: bad header");
        int v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) v = v * 10 + (bytes[pos++] - '0');
        return v;
    };
    int ww = read_int();
    int hh = read_int();
    int maxv = read_int();
    if (maxv != 255) throw FormatError("ppm: unsupported max value");
    ++pos;  // single whitespace after maxval
    std::size_t need = static_cast<std::size_t>(ww) * hh * 3;
    if (bytes.size() - pos != need) throw FormatError("ppm: truncated pixel data");
    std::vector<float> out(need);
    for (std::size_t i = 0; i < need; ++i) out[i] = bytes[pos + i] / 255.f;
    *h = hh;
    *w = ww;
    return out;
}

void write_scene(const fs::path& dir, const SceneSequence& seq) {
    if (seq.frames.empty()) throw ContractError("write_scene: empty sequence");
    fs::create_directories(dir);

    json frames = json::array();
    json checksums = json::object();
    auto emit = [&](const std::string& name, const std::vector<std::uint8_t>& bytes) {
        write_file_bytes(dir / name, bytes.data(), bytes.size());
        checksums[name] = hex32(crc32(bytes.data(), bytes.size()));
    };

    const geo::CameraPose world_from = seq.frames.front().pose;
    for (int i = 0; i < seq.n_frames(); ++i) {
        const Frame& fr = seq.frames[i];
        json entry;
        std::string rgb_name = frame_name("rgb", i, "ppm");
        emit(rgb_name, encode_ppm(fr.rgb, fr.h, fr.w));
        entry["rgb"] = rgb_name;

        std::string depth_name = frame_name("depth", i, "f32");
        emit(depth_name, float_bytes(fr.depth));
        entry["depth"] = depth_name;

        geo::Pointmap local = fr.local_pointmap();
        std::string pl_name = frame_name("ptmap_local", i, "f32");
        emit(pl_name, float_bytes(local.xyz));
        entry["ptmap_local"] = pl_name;

        geo::Pointmap global = geo::local_to_global(local, fr.pose, world_from);
        std::string pg_name = frame_name("ptmap_global", i, "f32");
        emit(pg_name, float_bytes(global.xyz));
        entry["ptmap_global"] = pg_name;

        std::string pose_name = frame_name("pose", i, "json");
        std::string pose_str = pose_to_json(fr.pose).dump(2);
        emit(pose_name, std::vector<std::uint8_t>(pose_str.begin(), pose_str.end()));
        entry["pose"] = pose_name;

        std::string mask_name = frame_name("mask", i, "u8");
        emit(mask_name, std::vector<std::uint8_t>(fr.mask.begin(), fr.mask.end()));
        entry["mask"] = mask_name;

        frames.push_back(entry);
    }

    json manifest{{"version", 1},
                  {"resolution", seq.frames.front().w},
                  {"n_frames", seq.n_frames()},
                  {"metric_scale", seq.metric_scale},
                  {"seed", seq.seed},
                  {"frames", frames},
                  {"checksums", checksums}};
    std::string text = manifest.dump(2);
    write_file_bytes(dir / "manifest.json", text.data(), text.size());
}

SceneReader::SceneReader(const fs::path& dir) : dir_(dir) {
    fs::path mpath = dir / "manifest.json";
    if (!fs::exists(mpath)) throw IoError("no manifest.json in " + dir.string());
    json m;
    try {
        auto bytes = read_file_bytes(mpath);
        m = json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        throw FormatError("manifest.json: " + std::string(e.what()));
    }
    if (m.value("version", -1) != 1)
        throw FormatError("manifest.json: unsupported version");
    n_frames_ = m.at("n_frames").get<int>();
    resolution_ = m.at("resolution").get<int>();
    metric_scale_ = m.value("metric_scale", false);
    seed_ = m.value("seed", std::uint64_t(0));
    if (n_frames_ < 1) throw FormatError("manifest.json: no frames");
    const json& frames = m.at("frames");
    if (static_cast<int>(frames.size()) != n_frames_)
        throw FormatError("manifest.json: frame list length mismatch");
    for (const auto& e : frames) {
        FrameFiles ff;
        ff.rgb = e.at("rgb").get<std::string>();
        ff.depth = e.at("depth").get<std::string>();
        ff.ptmap_local = e.at("ptmap_local").get<std::string>();
        ff.ptmap_global = e.at("ptmap_global").get<std::string>();
        ff.pose = e.at("pose").get<std::string>();
        ff.mask = e.at("mask").get<std::string>();
        files_.push_back(ff);
    }
    if (m.contains("checksums"))
        for (auto it = m["checksums"].begin(); it != m["checksums"].end(); ++it)
            checksums_.emplace_back(it.key(),
                                    static_cast<std::uint32_t>(
                                        std::stoul(it.value().get<std::string>(), nullptr, 16)));
}

std::vector<std::uint8_t> SceneReader::read_checked(const std::string& name) const {
    auto bytes = read_file_bytes(dir_ / name);
    for (const auto& [n, sum] : checksums_)
        if (n == name) {
            if (crc32(bytes.data(), bytes.size()) != sum)
                throw FormatError("checksum mismatch: " + name);
            break;
        }
    return bytes;
}

StoredFrame SceneReader::load_frame(int index) const {
    if (index < 0 || index >= n_frames_) throw ContractError("load_frame: index out of range");
    const FrameFiles& ff = files_[index];
    StoredFrame out;
    Frame& fr = out.frame;
    fr.t = index + 1;

    int h = 0, w = 0;
    fr.rgb = decode_ppm(read_checked(ff.rgb), &h, &w);
    if (h != resolution_ || w != resolution_) throw FormatError("rgb resolution mismatch");
    fr.h = h;
    fr.w = w;

    std::size_t hw = static_cast<std::size_t>(h) * w;
    fr.depth = bytes_to_floats(read_checked(ff.depth), hw, ff.depth);

    auto mask_bytes = read_checked(ff.mask);
    if (mask_bytes.size() != hw) throw FormatError("mask size mismatch: " + ff.mask);
    fr.mask.assign(mask_bytes.begin(), mask_bytes.end());

    json pj;
    try {
        auto pb = read_checked(ff.pose);
        pj = json::parse(pb.begin(), pb.end());
    } catch (const json::exception& e) {
        throw FormatError(ff.pose + ": " + std::string(e.what()));
    }
    fr.pose = pose_from_json(pj);

    out.local = geo::Pointmap(h, w, geo::PointmapRef::Local);
    out.local.xyz = bytes_to_floats(read_checked(ff.ptmap_local), hw * 3, ff.ptmap_local);
    out.global = geo::Pointmap(h, w, geo::PointmapRef::Global);
    out.global.xyz = bytes_to_floats(read_checked(ff.ptmap_global), hw * 3, ff.ptmap_global);
    return out;
}

std::vector<StoredFrame> SceneReader::load_all() const {
    std::vector<StoredFrame> out;
    out.reserve(n_frames_);
    for (int i = 0; i < n_frames_; ++i) out.push_back(load_frame(i));
    return out;
}

bool is_scene_dir(const fs::path& dir) { return fs::exists(dir / "manifest.json"); }

std::vector<fs::path> find_scene_dirs(const fs::path& root) {
    std::vector<fs::path> out;
    if (is_scene_dir(root)) {
        out.push_back(root);
        return out;
    }
    if (!fs::is_directory(root)) throw IoError("not a directory: " + root.string());
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && is_scene_dir(e.path())) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoError("no scenes under " + root.string());
    return out;
}

void write_prediction(const fs::path& dir, int index, const PointmapPrediction& p) {
    p.validate();
    std::vector<float> payload;
    payload.reserve(p.local.xyz.size() * 2 + p.conf_local.size() * 2);
    payload.insert(payload.end(), p.local.xyz.begin(), p.local.xyz.end());
    payload.insert(payload.end(), p.conf_local.begin(), p.conf_local.end());
    payload.insert(payload.end(), p.global.xyz.begin(), p.global.xyz.end());
    payload.insert(payload.end(), p.conf_global.begin(), p.conf_global.end());
    auto bytes = float_bytes(payload);
    write_file_bytes(dir / frame_name("pred", index, "f32"), bytes.data(), bytes.size());
    std::string pose_str = pose_to_json(p.pose).dump(2);
    write_file_bytes(dir / frame_name("pred_pose", index, "json"), pose_str.data(),
                     pose_str.size());
}

PointmapPrediction read_prediction(const fs::path& dir, int index, int h, int w) {
    std::size_t hw = static_cast<std::size_t>(h) * w;
    auto bytes = read_file_bytes(dir / frame_name("pred", index, "f32"));
    auto vals = bytes_to_floats(bytes, hw * 8, "pred dump");
    PointmapPrediction p;
    p.local = geo::Pointmap(h, w, geo::PointmapRef::Local);
    p.global = geo::Pointmap(h, w, geo::PointmapRef::Global);
    auto it = vals.begin();
    std::copy(it, it + hw * 3, p.local.xyz.begin());
    it += hw * 3;
    p.conf_local.assign(it, it + hw);
    it += hw;
    std::copy(it, it + hw * 3, p.global.xyz.begin());
    it += hw * 3;
    p.conf_global.assign(it, it + hw);
    auto pb = read_file_bytes(dir / frame_name("pred_pose", index, "json"));
    json pj;
    try {
        pj = json::parse(pb.begin(), pb.end());
    } catch (const json::exception& e) {
        throw FormatError("pred pose json: " + std::string(e.what()));
    }
    p.pose = pose_from_json(pj);
    p.validate();
    return p;
}

}  // namespace streampoint::gen
