#include <doctest.h>

#include "streampoint/dataset_io.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <vector>

using namespace streampoint;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* tag) {
    fs::path d = fs::temp_directory_path() / (std::string("sp_io_") + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

gen::SceneSequence tiny_scene(std::uint64_t seed) {
    gen::SceneConfig c;
    c.n_frames = 3;
    c.resolution = 16;
    c.patch_multiple = 8;
    c.n_primitives = 3;
    return gen::generate_scene(seed, c);
}

std::map<std::string, std::vector<std::uint8_t>> slurp_dir(const fs::path& d) {
    std::map<std::string, std::vector<std::uint8_t>> out;
    for (const auto& e : fs::directory_iterator(d))
        out[e.path().filename().string()] = gen::read_file_bytes(e.path());
    return out;
}

}  // namespace

TEST_CASE("scene write-read-write is byte-identical") {
    auto seq = tiny_scene(4);
    fs::path d1 = fresh_dir("roundtrip1");
    gen::write_scene(d1, seq);

    gen::SceneReader reader(d1);
    CHECK(reader.n_frames() == 3);
    CHECK(reader.resolution() == 16);
    CHECK(reader.seed() == 4);

    // reconstruct a sequence from what was read and re-write it
    gen::SceneSequence back;
    back.metric_scale = reader.metric_scale();
    back.seed = reader.seed();
    for (int i = 0; i < reader.n_frames(); ++i) back.frames.push_back(reader.load_frame(i).frame);
    fs::path d2 = fresh_dir("roundtrip2");
    gen::write_scene(d2, back);

    auto files1 = slurp_dir(d1);
    auto files2 = slurp_dir(d2);
    REQUIRE(files1.size() == files2.size());
    for (const auto& [name, bytes] : files1) {
        INFO("file ", name);
        REQUIRE(files2.count(name) == 1);
        CHECK(files2[name] == bytes);
    }
}

TEST_CASE("reader verifies checksums") {
    auto seq = tiny_scene(5);
    fs::path d = fresh_dir("tamper");
    gen::write_scene(d, seq);

    // flip one byte inside a payload file
    fs::path victim = d / "depth_0001.f32";
    auto bytes = gen::read_file_bytes(victim);
    bytes[7] ^= 0x40;
    gen::write_file_bytes(victim, bytes.data(), bytes.size());

    gen::SceneReader reader(d);
    CHECK_THROWS_AS(reader.load_frame(1), FormatError);
    CHECK_NOTHROW(reader.load_frame(0));
}

TEST_CASE("reader rejects a manifest whose frame list disagrees with its count") {
    auto seq = tiny_scene(6);
    fs::path d = fresh_dir("countmismatch");
    gen::write_scene(d, seq);
    auto bytes = gen::read_file_bytes(d / "manifest.json");
    std::string text(bytes.begin(), bytes.end());
    auto pos = text.find("\"n_frames\": 3");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 13, "\"n_frames\": 4");
    gen::write_file_bytes(d / "manifest.json", text.data(), text.size());
    CHECK_THROWS_AS(gen::SceneReader{d}, FormatError);

    // a deleted payload file surfaces as an I/O failure on access
    fs::path d2 = fresh_dir("missingfile");
    gen::write_scene(d2, seq);
    fs::remove(d2 / "rgb_0002.ppm");
    gen::SceneReader r(d2);
    CHECK_THROWS_AS(r.load_frame(2), IoError);
}

TEST_CASE("reader rejects a directory without a manifest") {
    fs::path d = fresh_dir("nomanifest");
    CHECK_THROWS_AS(gen::SceneReader{d}, IoError);
    CHECK_FALSE(gen::is_scene_dir(d));
}

TEST_CASE("find_scene_dirs returns sorted children or the root itself") {
    fs::path root = fresh_dir("findroot");
    for (const char* name : {"scene_0002", "scene_0000", "scene_0001"})
        gen::write_scene(root / name, tiny_scene(1));
    auto dirs = gen::find_scene_dirs(root);
    REQUIRE(dirs.size() == 3);
    CHECK(dirs[0].filename() == "scene_0000");
    CHECK(dirs[1].filename() == "scene_0001");
    CHECK(dirs[2].filename() == "scene_0002");

    auto self = gen::find_scene_dirs(root / "scene_0001");
    REQUIRE(self.size() == 1);
    CHECK(self[0].filename() == "scene_0001");

    fs::path empty = fresh_dir("findempty");
    CHECK_THROWS_AS(gen::find_scene_dirs(empty), IoError);
}

TEST_CASE("ppm encoding round-trips 8-bit colors") {
    const int h = 5, w = 7;
    std::vector<float> rgb(h * w * 3);
    for (std::size_t i = 0; i < rgb.size(); ++i)
        rgb[i] = static_cast<float>((i * 11) % 256) / 255.0f;
    auto bytes = gen::encode_ppm(rgb, h, w);
    int rh = 0, rw = 0;
    auto back = gen::decode_ppm(bytes, &rh, &rw);
    CHECK(rh == h);
    CHECK(rw == w);
    REQUIRE(back.size() == rgb.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) CHECK(back[i] == rgb[i]);
}

TEST_CASE("prediction dumps round-trip") {
    const int h = 8, w = 8;
    Rng r(3);
    PointmapPrediction p;
    p.local = geo::Pointmap(h, w, geo::PointmapRef::Local);
    p.global = geo::Pointmap(h, w, geo::PointmapRef::Global);
    for (auto& v : p.local.xyz) v = static_cast<float>(r.normal());
    for (auto& v : p.global.xyz) v = static_cast<float>(r.normal());
    for (int i = 0; i < h * w; ++i) {
        p.conf_local.push_back(1.0f + static_cast<float>(r.uniform(0.001, 5)));
        p.conf_global.push_back(1.0f + static_cast<float>(r.uniform(0.001, 5)));
    }
    p.pose = geo::CameraPose(geo::Quat::from_wxyz(0.9, 0.1, -0.2, 0.3),
                             geo::Vector3d(0.5, -1, 2), geo::Vector2d(33, 35));
    p.validate();

    fs::path d = fresh_dir("pred");
    gen::write_prediction(d, 0, p);
    CHECK(fs::exists(d / "pred_0000.f32"));
    CHECK(fs::exists(d / "pred_pose_0000.json"));

    PointmapPrediction back = gen::read_prediction(d, 0, h, w);
    CHECK(back.local.xyz == p.local.xyz);
    CHECK(back.global.xyz == p.global.xyz);
    CHECK(back.conf_local == p.conf_local);
    CHECK(back.conf_global == p.conf_global);
    CHECK(back.pose.q == p.pose.q);
    CHECK(back.pose.tau == p.pose.tau);
    CHECK(back.pose.f == p.pose.f);
}

TEST_CASE("prediction block layout is [X_local | C_local | X_global | C_global]") {
    const int h = 2, w = 2;
    PointmapPrediction p;
    p.local = geo::Pointmap(h, w, geo::PointmapRef::Local);
    p.global = geo::Pointmap(h, w, geo::PointmapRef::Global);
    for (std::size_t i = 0; i < p.local.xyz.size(); ++i) {
        p.local.xyz[i] = static_cast<float>(i);
        p.global.xyz[i] = 100.0f + static_cast<float>(i);
    }
    p.conf_local.assign(h * w, 2.0f);
    p.conf_global.assign(h * w, 3.0f);

    fs::path d = fresh_dir("predlayout");
    gen::write_prediction(d, 7, p);
    auto bytes = gen::read_file_bytes(d / "pred_0007.f32");
    REQUIRE(bytes.size() == sizeof(float) * (h * w) * 8);
    const float* f = reinterpret_cast<const float*>(bytes.data());
    CHECK(f[0] == 0.0f);                  // X_local starts the block
    CHECK(f[h * w * 3] == 2.0f);          // then C_local
    CHECK(f[h * w * 4] == 100.0f);        // then X_global
    CHECK(f[h * w * 7] == 3.0f);          // then C_global
}
