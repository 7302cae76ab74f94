#include <doctest.h>

#include "streampoint/heads.hpp"

#include <cmath>
#include <vector>

using namespace streampoint;
using net::Model;
using net::ModelConfig;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.patch = 2;
    c.width = 8;
    c.enc_depth = 1;
    c.dec_depth = 2;
    c.n_heads = 2;
    c.mlp_ratio = 2;
    c.head_conv_hidden = 4;
    c.pose_hidden = 8;
    return c;
}

ad::Tensor<float> noise(Rng& r, std::vector<int> dims) {
    std::int64_t n = 1;
    for (int d : dims) n *= d;
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = static_cast<float>(r.normal() * 0.5);
    return ad::Tensor<float>::from_data(std::move(dims), std::move(v));
}

ad::Tensor<float> zeros(std::vector<int> dims) {
    std::int64_t n = 1;
    for (int d : dims) n *= d;
    return ad::Tensor<float>::from_data(std::move(dims),
                                        std::vector<float>(static_cast<std::size_t>(n), 0.f));
}

net::Pyramid<float> noise_pyramid(Rng& r, const ModelConfig& cfg, int k) {
    net::Pyramid<float> p;
    for (int i = 0; i <= cfg.dec_depth; ++i) p.push_back(noise(r, {k, cfg.width}));
    return p;
}

// head whose projection output is a fixed per-channel constant; convs muted
net::PointHeadP<float> constant_head(const ModelConfig& cfg, float xyz_fill, float raw_conf) {
    const int c = cfg.width, p = cfg.patch, hid = cfg.head_conv_hidden;
    net::PointHeadP<float> h;
    h.proj.w = zeros({2 * c, p * p * 4});
    std::vector<float> b(static_cast<std::size_t>(p) * p * 4);
    for (int i = 0; i < p * p; ++i) {
        b[i * 4 + 0] = b[i * 4 + 1] = b[i * 4 + 2] = xyz_fill;
        b[i * 4 + 3] = raw_conf;
    }
    h.proj.b = ad::Tensor<float>::from_data({p * p * 4}, std::move(b));
    h.conv1.w = zeros({9 * 4, hid});
    h.conv1.b = zeros({hid});
    h.conv2.w = zeros({9 * hid, 4});
    h.conv2.b = zeros({4});
    return h;
}

}  // namespace

TEST_CASE("pointmap head shapes follow the token grid") {
    ModelConfig cfg = tiny_config();
    Model<float> m(cfg, 1);
    Rng r(2);
    const int gh = 3, gw = 2;  // deliberately non-square
    auto pyr = noise_pyramid(r, cfg, gh * gw);
    auto out = net::head_pointmap(m.head_local, cfg, pyr, gh, gw);
    CHECK(out.xyz.ndim() == 3);
    CHECK(out.xyz.dim(0) == gh * cfg.patch);
    CHECK(out.xyz.dim(1) == gw * cfg.patch);
    CHECK(out.xyz.dim(2) == 3);
    CHECK(out.conf.ndim() == 1);
    CHECK(out.conf.dim(0) == gh * cfg.patch * gw * cfg.patch);
}

TEST_CASE("confidence is strictly greater than one") {
    ModelConfig cfg = tiny_config();
    Model<float> m(cfg, 3);
    Rng r(4);
    auto pyr = noise_pyramid(r, cfg, 4);
    auto out = net::head_pointmap(m.head_global, cfg, pyr, 2, 2);
    for (auto c : out.conf.val()) {
        CHECK(c > 1.0f);
        CHECK(std::isfinite(c));
    }
}

TEST_CASE("confidence clamps keep extreme raw values usable") {
    ModelConfig cfg = tiny_config();
    Rng r(5);
    auto pyr = noise_pyramid(r, cfg, 4);

    auto low = net::head_pointmap(constant_head(cfg, 0.f, -1000.f), cfg, pyr, 2, 2);
    const float floor_val = 1.0f + std::exp(-15.0f);
    for (auto c : low.conf.val()) {
        CHECK(c > 1.0f);  // even a huge negative raw never collapses to 1
        CHECK(c == doctest::Approx(floor_val).epsilon(1e-7));
    }

    auto high = net::head_pointmap(constant_head(cfg, 0.f, 1000.f), cfg, pyr, 2, 2);
    const float cap = 1.0f + std::exp(30.0f);
    for (auto c : high.conf.val()) {
        CHECK(std::isfinite(c));
        CHECK(c == doctest::Approx(cap).epsilon(1e-6));
    }
}

TEST_CASE("muted head emits zero points and confidence exactly 2") {
    ModelConfig cfg = tiny_config();
    Rng r(6);
    auto pyr = noise_pyramid(r, cfg, 4);
    auto out = net::head_pointmap(constant_head(cfg, 0.f, 0.f), cfg, pyr, 2, 2);
    for (auto v : out.xyz.val()) CHECK(v == 0.0f);
    for (auto c : out.conf.val()) CHECK(c == 2.0f);  // 1 + exp(0)
}

TEST_CASE("one token only reaches its patch plus the conv halo") {
    ModelConfig cfg = tiny_config();
    Model<float> m(cfg, 7);
    Rng r(8);
    const int gh = 4, gw = 4, K = gh * gw;
    const int H = gh * cfg.patch, W = gw * cfg.patch;
    auto pyr = noise_pyramid(r, cfg, K);
    auto base = net::head_pointmap(m.head_local, cfg, pyr, gh, gw);

    // perturb token 0 at both tapped levels
    auto pyr2 = pyr;
    {
        auto mid = pyr[cfg.dec_depth / 2].val();
        auto top = pyr[cfg.dec_depth].val();
        for (int j = 0; j < cfg.width; ++j) {
            mid[j] += 1.0f;
            top[j] -= 0.5f;
        }
        pyr2[cfg.dec_depth / 2] = ad::Tensor<float>::from_data({K, cfg.width}, std::move(mid));
        pyr2[cfg.dec_depth] = ad::Tensor<float>::from_data({K, cfg.width}, std::move(top));
    }
    auto bumped = net::head_pointmap(m.head_local, cfg, pyr2, gh, gw);

    // token 0 covers pixels [0,2) x [0,2); two 3x3 convs reach 2 further
    bool changed_inside = false;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const bool in_halo = y <= 3 && x <= 3;
            bool same = true;
            for (int ch = 0; ch < 3; ++ch)
                if (base.xyz.val()[(y * W + x) * 3 + ch] !=
                    bumped.xyz.val()[(y * W + x) * 3 + ch])
                    same = false;
            if (base.conf.val()[y * W + x] != bumped.conf.val()[y * W + x]) same = false;
            if (!in_halo) {
                INFO("pixel ", y, ",", x);
                CHECK(same);
            } else if (!same) {
                changed_inside = true;
            }
        }
    CHECK(changed_inside);
}

TEST_CASE("zeroed pose regressor gives the identity camera at base focal") {
    ModelConfig cfg = tiny_config();
    Rng r(9);
    auto pyr = noise_pyramid(r, cfg, 4);

    net::PoseHeadP<float> head;
    head.fc1.w = noise(r, {cfg.width, cfg.pose_hidden});
    head.fc1.b = zeros({cfg.pose_hidden});
    head.fc2.w = zeros({cfg.pose_hidden, 9});
    head.fc2.b = zeros({9});

    auto pose = net::head_pose(head, pyr, cfg.dec_depth);
    CHECK(pose.q.val() == std::vector<float>{1.f, 0.f, 0.f, 0.f});
    CHECK(pose.tau.val() == std::vector<float>(3, 0.f));
    CHECK(pose.f_norm.val() == std::vector<float>(2, 1.f));  // exp(0)
}

TEST_CASE("pose quaternion is unit with nonnegative scalar part") {
    ModelConfig cfg = tiny_config();
    Model<float> m(cfg, 10);
    Rng r(11);
    for (int trial = 0; trial < 10; ++trial) {
        auto pyr = noise_pyramid(r, cfg, 4);
        auto pose = net::head_pose(m.head_pose, pyr, cfg.dec_depth);
        double n = 0;
        for (auto v : pose.q.val()) n += static_cast<double>(v) * v;
        CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(pose.q.val()[0] >= 0.0f);
        for (auto f : pose.f_norm.val()) CHECK(f > 0.0f);
    }
}

TEST_CASE("materialized prediction carries every field through") {
    ModelConfig cfg = tiny_config();
    Model<float> m(cfg, 12);
    Rng r(13);
    const int gh = 2, gw = 2;
    auto pyr = noise_pyramid(r, cfg, gh * gw);
    auto g = net::predict_frame(m, pyr, gh, gw);
    const double f_base = 32.0;
    auto p = net::materialize_prediction(g, f_base);

    CHECK(p.local.h == gh * cfg.patch);
    CHECK(p.local.w == gw * cfg.patch);
    CHECK(p.local.ref == geo::PointmapRef::Local);
    CHECK(p.global.ref == geo::PointmapRef::Global);
    CHECK(p.conf_local.size() == p.local.count());
    CHECK(p.conf_global.size() == p.local.count());
    CHECK_NOTHROW(p.validate());

    // values survive the copy
    CHECK(p.local.xyz[0] == g.local.xyz.val()[0]);
    CHECK(p.conf_global[3] == g.global.conf.val()[3]);
    CHECK(p.pose.f.x() == doctest::Approx(f_base * g.pose.f_norm.val()[0]));
    CHECK(p.pose.f.y() == doctest::Approx(f_base * g.pose.f_norm.val()[1]));
    CHECK(p.pose.q.w == doctest::Approx(g.pose.q.val()[0]));
}

TEST_CASE("local and global heads are independent parameter sets") {
    ModelConfig cfg = tiny_config();
    Model<float> m(cfg, 14);
    CHECK(m.params.find("head_local.proj.w").val() != m.params.find("head_global.proj.w").val());
    Rng r(15);
    auto pyr = noise_pyramid(r, cfg, 4);
    auto g = net::predict_frame(m, pyr, 2, 2);
    CHECK(g.local.xyz.val() != g.global.xyz.val());
    CHECK(g.local.conf.val() != g.global.conf.val());
}

TEST_CASE("gradients flow into both heads and the pose regressor") {
    ModelConfig cfg = tiny_config();
    Model<float> m(cfg, 16);
    Rng r(17);
    auto pyr = noise_pyramid(r, cfg, 4);
    // pyramid levels as constants: only head parameters receive gradient
    {
        ad::Tape<float> tape;
        auto g = net::predict_frame(m, pyr, 2, 2);
        auto loss = ad::add(ad::sum(g.local.xyz), ad::sum(g.global.conf));
        loss = ad::add(loss, ad::sum(g.pose.tau));
        loss = ad::add(loss, ad::sum(g.pose.q));
        loss = ad::add(loss, ad::sum(g.pose.f_norm));
        tape.backward(loss);
    }
    auto nonzero = [&](const char* name) {
        for (auto v : m.params.find(name).grad())
            if (v != 0.0f) return true;
        return false;
    };
    CHECK(nonzero("head_local.proj.w"));
    CHECK(nonzero("head_local.conv2.b"));
    CHECK(nonzero("head_global.proj.w"));
    CHECK(nonzero("head_global.conv1.w"));
    CHECK(nonzero("head_pose.fc1.w"));
    CHECK(nonzero("head_pose.fc2.b"));
    // local xyz loss must not leak into the global head
    bool global_conv2_from_local = false;
    for (auto v : m.params.find("head_local.conv1.b").grad())
        if (v != 0.0f) global_conv2_from_local = true;
    CHECK(global_conv2_from_local);  // conv1 feeds the residual refinement
}

TEST_CASE("pyramid depth is checked") {
    ModelConfig cfg = tiny_config();
    Model<float> m(cfg, 18);
    Rng r(19);
    net::Pyramid<float> shallow;
    shallow.push_back(noise(r, {4, cfg.width}));
    shallow.push_back(noise(r, {4, cfg.width}));
    CHECK_THROWS_AS(net::head_pointmap(m.head_local, cfg, shallow, 2, 2), ShapeError);
    CHECK_THROWS_AS(net::head_pose(m.head_pose, shallow, cfg.dec_depth), ShapeError);
}
