#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ahmsa/errors.hpp"
#include "ahmsa/model/checkpoint.hpp"
#include "ahmsa/model/network.hpp"
#include "gradcheck.hpp"

using namespace ahmsa;
using namespace ahmsa::model;

namespace {

Tensor random_input(Shape shape, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> data(shape_numel(shape));
  for (float& v : data) v = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(data));
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.h_flow = c.w_flow = 8;
  c.patch_size = 2;
  c.embed_channels = 6;
  c.heads = 3;
  c.blocks_per_layer = {1, 1, 1};
  return c;
}

// Applies grid permutation `perm` (new position i takes old position perm[i]).
Tensor permute_grid(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t B = x.dim(0), C = x.dim(1), N = x.dim(2) * x.dim(3);
  std::vector<float> out(x.numel());
  auto in = x.data();
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    for (std::size_t i = 0; i < N; ++i) out[bc * N + i] = in[bc * N + perm[i]];
  }
  return Tensor::from_data(x.shape(), std::move(out));
}

float max_abs_diff(const Tensor& a, const Tensor& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

void zero_all(std::vector<Tensor*> tensors) {
  for (auto* t : tensors) std::fill(t->mutable_data().begin(), t->mutable_data().end(), 0.0f);
}

std::vector<Tensor*> block_tensors(BlockParams<float>& b) {
  return {&b.norm_channel.gamma, &b.norm_channel.beta, &b.ca_reduce_w, &b.ca_reduce_b,
          &b.ca_expand_w,        &b.ca_expand_b,       &b.norm_spatial.gamma,
          &b.norm_spatial.beta,  &b.q_w,               &b.q_b,
          &b.k_w,                &b.k_b,               &b.v_w,
          &b.v_b,                &b.out_w,             &b.out_b,
          &b.norm_ffn.gamma,     &b.norm_ffn.beta,     &b.ffn_in_w,
          &b.ffn_in_b,           &b.ffn_out_w,         &b.ffn_out_b};
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("config validation lists every violation") {
    ModelConfig c;
    c.embed_channels = 95;
    c.blocks_per_layer = {2, 2};
    const auto bad = c.violations();
    CHECK(bad.size() == 2);
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_THROWS_AS(init_model<float>(c, 1), ConfigError);

    ModelConfig d;
    d.h_flow = 30;
    CHECK_FALSE(d.violations().empty());
    ModelConfig e;
    e.downsample_factor = 3;  // 4x4 grid cannot shrink by 3^2
    CHECK_FALSE(e.violations().empty());
    CHECK(ModelConfig{}.violations().empty());
  }

  TEST_CASE("config JSON round trip and unknown keys") {
    ModelConfig c = tiny_config();
    CHECK(model_config_from_json(to_json(c)) == c);
    auto j = to_json(c);
    j["dropout"] = 0.1;
    CHECK_THROWS_AS(model_config_from_json(j), ConfigError);
  }

  TEST_CASE("init is deterministic and seed-sensitive") {
    const auto a = init_model<float>(ModelConfig{}, 7);
    const auto b = init_model<float>(ModelConfig{}, 7);
    const auto c = init_model<float>(ModelConfig{}, 8);
    const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
    REQUIRE(pa.size() == pb.size());
    bool any_diff = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(bit_equal(*pa[i], *pb[i]));
      any_diff |= !bit_equal(*pa[i], *pc[i]);
    }
    CHECK(any_diff);
    CHECK(a.embed_w.shape() == Shape{96, 3, 7, 7});
    CHECK(a.head_w.shape() == Shape{96, 3});
  }

  TEST_CASE("init follows the Xavier bound, zero biases and identity norms") {
    const auto p = init_model<float>(ModelConfig{}, 3);
    const double a_embed = std::sqrt(6.0 / (3 * 49 + 96 * 49));
    for (float w : p.embed_w.data()) CHECK(std::abs(w) <= a_embed);
    const auto& blk = p.levels[0][0];
    const double a_q = std::sqrt(6.0 / (96 + 96));
    for (float w : blk.q_w.data()) CHECK(std::abs(w) <= a_q);
    for (float w : blk.q_b.data()) CHECK(w == 0.0f);
    for (float g : blk.norm_ffn.gamma.data()) CHECK(g == 1.0f);
    for (float b : blk.norm_ffn.beta.data()) CHECK(b == 0.0f);
    for (const auto* t : p.parameters()) {
      for (float v : t->data()) REQUIRE(std::isfinite(v));
    }
  }

  TEST_CASE("parameter count is a function of the config") {
    for (const auto& c : {ModelConfig{}, tiny_config()}) {
      const auto p = init_model<float>(c, 1);
      CHECK(p.parameter_count() == expected_parameter_count(c));
    }
    // Hand count for the tiny config: C=6, hidden=1, ffn=24, top grid 1x1.
    const std::size_t block = 36 + (6 + 1 + 6 + 6) + 4 * 42 + (144 + 24 + 144 + 6);
    const std::size_t transition = 324 + 6 + 12;
    CHECK(expected_parameter_count(tiny_config()) ==
          6 * 3 * 4 + 6 + 3 * block + 2 * transition + 6 * 3 + 3);
  }

  TEST_CASE("clone is deep and cast preserves values") {
    auto p = init_model<float>(tiny_config(), 5);
    auto q = p.clone();
    q.head_b.mutable_data()[0] = 42.0f;
    CHECK(p.head_b.data()[0] == 0.0f);
    const auto d = p.cast<double>();
    const auto back = d.cast<float>();
    const auto pp = p.parameters();
    const auto pb = back.parameters();
    for (std::size_t i = 0; i < pp.size(); ++i) CHECK(bit_equal(*pp[i], *pb[i]));
  }

  TEST_CASE("patch_embed shape, linearity and locality") {
    const auto p = init_model<float>(ModelConfig{}, 11);
    const auto x = random_input({2, 3, 28, 28}, 1);
    const auto y = patch_embed(x, p);
    CHECK(y.shape() == Shape{2, 96, 4, 4});

    const auto z = patch_embed(Tensor::zeros({1, 3, 28, 28}), p);
    CHECK(std::all_of(z.data().begin(), z.data().end(), [](float v) { return v == 0.0f; }));

    // Change pixels only inside grid cell (1, 2) of sample 0.
    auto x2 = Tensor::from_data(x.shape(), std::vector<float>(x.data().begin(), x.data().end()));
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t yy = 7; yy < 14; ++yy) {
        for (std::size_t xx = 14; xx < 21; ++xx) {
          x2.mutable_data()[((0 * 3 + c) * 28 + yy) * 28 + xx] += 0.5f;
        }
      }
    }
    const auto y2 = patch_embed(x2, p);
    bool changed_inside = false;
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t c = 0; c < 96; ++c) {
        for (std::size_t gy = 0; gy < 4; ++gy) {
          for (std::size_t gx = 0; gx < 4; ++gx) {
            const std::size_t i = ((b * 96 + c) * 4 + gy) * 4 + gx;
            const bool inside = b == 0 && gy == 1 && gx == 2;
            if (inside) changed_inside |= y.data()[i] != y2.data()[i];
            else CHECK(y.data()[i] == y2.data()[i]);
          }
        }
      }
    }
    CHECK(changed_inside);

    CHECK_THROWS_AS(patch_embed(Tensor::zeros({1, 3, 21, 28}), p), ValidationError);
    CHECK_THROWS_AS(patch_embed(Tensor::zeros({1, 2, 28, 28}), p), ValidationError);
  }

  TEST_CASE("channel attention gating") {
    auto p = init_model<float>(ModelConfig{}, 13);
    const auto& blk = p.levels[0][0];
    const auto zero = channel_attention(Tensor::zeros({1, 96, 4, 4}), blk);
    CHECK(std::all_of(zero.data().begin(), zero.data().end(), [](float v) { return v == 0.0f; }));

    // Strictly positive input: the per-channel ratio out/x is the gate weight.
    const auto x = random_input({2, 96, 4, 4}, 2, 0.5f, 1.5f);
    const auto y = channel_attention(x, blk);
    for (std::size_t bc = 0; bc < 2 * 96; ++bc) {
      const float w0 = y.data()[bc * 16] / x.data()[bc * 16];
      CHECK(w0 > 0.0f);
      CHECK(w0 < 1.0f);
      for (std::size_t i = 1; i < 16; ++i) {
        CHECK(y.data()[bc * 16 + i] / x.data()[bc * 16 + i] == doctest::Approx(w0).epsilon(1e-5));
      }
    }
  }

  TEST_CASE("channel attention: identical channels with identical MLP rows gate equally") {
    auto p = init_model<float>(ModelConfig{}, 17);
    auto& blk = p.levels[0][0];
    const std::size_t C = 96, h = 24;
    // Make expand rows 0 and 1 equal and reduce columns 0 and 1 equal.
    auto ew = blk.ca_expand_w.mutable_data();
    for (std::size_t j = 0; j < h; ++j) ew[1 * h + j] = ew[0 * h + j];
    auto rw = blk.ca_reduce_w.mutable_data();
    for (std::size_t j = 0; j < h; ++j) rw[j * C + 1] = rw[j * C + 0];
    auto x = random_input({1, C, 4, 4}, 3, 0.5f, 1.5f);
    for (std::size_t i = 0; i < 16; ++i) x.mutable_data()[16 + i] = x.data()[i];
    const auto y = channel_attention(x, blk);
    for (std::size_t i = 0; i < 16; ++i) CHECK(y.data()[i] == y.data()[16 + i]);
  }

  TEST_CASE("spatial attention: single token reduces to out_proj(V)") {
    const auto p = init_model<float>(ModelConfig{}, 19);
    const auto& blk = p.levels[2][0];
    const auto x = random_input({3, 96, 1, 1}, 4);
    Tensor weights;
    const auto y = spatial_attention(x, blk, 3, &weights);
    const auto expected = ops::conv2d(ops::conv2d(x, blk.v_w, blk.v_b), blk.out_w, blk.out_b);
    CHECK(bit_equal(y, expected));
    CHECK(weights.shape() == Shape{3, 3, 1, 1});
    for (float w : weights.data()) CHECK(w == 1.0f);
  }

  TEST_CASE("spatial attention rows sum to one") {
    const auto p = init_model<float>(ModelConfig{}, 23);
    const auto x = random_input({2, 96, 4, 4}, 5, -3.0f, 3.0f);
    Tensor weights;
    const auto y = spatial_attention(x, p.levels[0][0], 3, &weights);
    CHECK(y.shape() == x.shape());
    REQUIRE(weights.shape() == Shape{2, 3, 16, 16});
    for (std::size_t r = 0; r < 2 * 3 * 16; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 16; ++k) s += weights.data()[r * 16 + k];
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
    CHECK_THROWS_AS(spatial_attention(x, p.levels[0][0], 5), ConfigError);
  }

  TEST_CASE("feed-forward is position-wise") {
    const auto p = init_model<float>(ModelConfig{}, 29);
    const auto& blk = p.levels[0][0];
    const auto zero = feed_forward(Tensor::zeros({1, 96, 4, 4}), blk);
    CHECK(std::all_of(zero.data().begin(), zero.data().end(), [](float v) { return v == 0.0f; }));
    const auto x = random_input({2, 96, 4, 4}, 6);
    std::vector<std::size_t> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937_64(9));
    const auto y = feed_forward(x, blk);
    CHECK(y.shape() == x.shape());
    CHECK(max_abs_diff(feed_forward(permute_grid(x, perm), blk), permute_grid(y, perm)) < 1e-6f);
  }

  TEST_CASE("msa_block is equivariant under grid permutations") {
    const auto p = init_model<float>(ModelConfig{}, 31);
    for (std::uint64_t trial = 0; trial < 3; ++trial) {
      const auto x = random_input({2, 96, 4, 4}, 100 + trial);
      std::vector<std::size_t> perm(16);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), std::mt19937_64(trial));
      const auto y = msa_block(x, p.levels[0][0], 3);
      const auto yp = msa_block(permute_grid(x, perm), p.levels[0][0], 3);
      CHECK(y.shape() == x.shape());
      CHECK(max_abs_diff(yp, permute_grid(y, perm)) < 1e-5f);
    }
  }

  TEST_CASE("msa_block with a zeroed branch set is the identity") {
    auto p = init_model<float>(ModelConfig{}, 37);
    auto& blk = p.levels[1][0];
    zero_all(block_tensors(blk));
    const auto x = random_input({2, 96, 2, 2}, 7);
    CHECK(bit_equal(msa_block(x, blk, 3), x));
  }

  TEST_CASE("downsample shapes and hot-cell tracing") {
    auto p = init_model<float>(ModelConfig{}, 41);
    const auto x = random_input({1, 96, 4, 4}, 8);
    const auto y1 = downsample(x, p.transitions[0], 2);
    CHECK(y1.shape() == Shape{1, 96, 2, 2});
    CHECK(downsample(y1, p.transitions[1], 2).shape() == Shape{1, 96, 1, 1});
    CHECK_THROWS_AS(downsample(Tensor::zeros({1, 96, 3, 4}), p.transitions[0], 2), ConfigError);

    // Identity conv: centre tap 1 on the diagonal, everything else 0.
    const std::size_t C = 4;
    TransitionParams<float> t;
    std::vector<float> k(C * C * 9, 0.0f);
    for (std::size_t c = 0; c < C; ++c) k[(c * C + c) * 9 + 4] = 1.0f;
    t.conv_w = Tensor::from_data({C, C, 3, 3}, k);
    t.conv_b = Tensor::zeros({C});
    t.norm = ops::LayerNormParams<float>::identity(C);

    // One hot cell at grid (2, 3) with channel profile (3, 1, 0, 0).
    std::vector<float> in(C * 16, 0.0f);
    const float profile[C] = {3.0f, 1.0f, 0.0f, 0.0f};
    for (std::size_t c = 0; c < C; ++c) in[c * 16 + 2 * 4 + 3] = profile[c];
    const auto y = downsample(Tensor::from_data({1, C, 4, 4}, in), t, 2);

    // Hand LN of the profile: mean 1, population variance 1.5.
    const double sd = std::sqrt(1.5 + 1e-5);
    const double ln[C] = {2.0 / sd, 0.0, -1.0 / sd, -1.0 / sd};
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t q = 0; q < 4; ++q) {
        const double expected = q == 3 ? std::max(ln[c], 0.0) : 0.0;  // quadrant (1, 1)
        CHECK(y.data()[c * 4 + q] == doctest::Approx(expected).epsilon(1e-5));
      }
    }
    CHECK(y.data()[0 * 4 + 3] > 1.0f);
  }

  TEST_CASE("default forward traces the documented shape pipeline") {
    const auto p = init_model<float>(ModelConfig{}, 43);
    ForwardTrace trace;
    const auto logits = forward(random_input({4, 3, 28, 28}, 9), p, &trace);
    CHECK(logits.shape() == Shape{4, 3});
    for (float v : logits.data()) CHECK(std::isfinite(v));
    const std::vector<Shape> expected = {
        {4, 3, 28, 28}, {4, 96, 4, 4}, {4, 96, 2, 2}, {4, 96, 1, 1}, {4, 3}};
    CHECK(trace.shapes == expected);
    CHECK(trace.blocks_executed == 12);
  }

  TEST_CASE("ablation block counts construct and run") {
    using Blocks = std::vector<std::size_t>;
    for (const auto& blocks :
         {Blocks{1, 1, 8}, Blocks{3, 3, 8}, Blocks{4, 4, 8}, Blocks{6, 6, 8}, Blocks{8, 8, 8}}) {
      ModelConfig c;
      c.blocks_per_layer = blocks;
      const auto p = init_model<float>(c, 47);
      ForwardTrace trace;
      const auto logits = forward(random_input({1, 3, 28, 28}, 10), p, &trace);
      CHECK(logits.shape() == Shape{1, 3});
      CHECK(trace.blocks_executed == blocks[0] + blocks[1] + blocks[2]);
    }
  }

  TEST_CASE("forward is deterministic and batch-independent") {
    const auto p = init_model<float>(ModelConfig{}, 53);
    auto x = random_input({3, 3, 28, 28}, 11);
    // Sample 2 duplicates sample 0.
    const std::size_t per = 3 * 28 * 28;
    std::copy_n(x.data().begin(), per, x.mutable_data().begin() + 2 * per);
    const auto a = forward(x, p);
    const auto b = forward(x, p);
    CHECK(bit_equal(a, b));
    for (std::size_t k = 0; k < 3; ++k) CHECK(a.data()[k] == a.data()[6 + k]);

    auto perturbed = Tensor::from_data(x.shape(), std::vector<float>(x.data().begin(), x.data().end()));
    for (std::size_t i = per; i < 2 * per; ++i) perturbed.mutable_data()[i] *= -2.0f;
    const auto c = forward(perturbed, p);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(c.data()[k] == a.data()[k]);
      CHECK(c.data()[6 + k] == a.data()[6 + k]);
    }
  }

  TEST_CASE("make_input_batch converts channel-last maps") {
    optflow::FlowFeatureMap m(28, 28);
    for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = static_cast<float>(i);
    const std::vector<optflow::FlowFeatureMap> maps = {m, m};
    const auto t = make_input_batch<float>(maps, ModelConfig{});
    CHECK(t.shape() == Shape{2, 3, 28, 28});
    CHECK(t.data()[1 * 784 + 5] == m.at(0, 5, 1));
    CHECK(t.data()[3 * 784 + 2 * 784 + 28 + 1] == m.at(1, 1, 2));
    CHECK_THROWS_AS(make_input_batch<float>({}, ModelConfig{}), ValidationError);
    const std::vector<optflow::FlowFeatureMap> bad = {optflow::FlowFeatureMap(14, 28)};
    CHECK_THROWS_AS(make_input_batch<float>(bad, ModelConfig{}), ValidationError);
  }

  TEST_CASE("tiny network end-to-end gradient check in double precision") {
    const ModelConfig c = tiny_config();
    auto p = init_model<double>(c, 61);
    // Perturb every parameter away from its init so biases, gammas and betas
    // all carry non-trivial gradients.
    std::mt19937_64 rng(63);
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    for (auto* t : p.parameters()) {
      for (double& v : t->mutable_data()) v += jitter(rng);
    }
    // A central difference with step 1e-3 that straddles a ReLU or max-pool
    // kink measures a chord, not the derivative. Shifting the ReLU biases keeps
    // every ReLU in its linear region; the fixed input keeps max-pool winners
    // separated by more than the step's reach. The ReLU backward itself is
    // covered by the per-op checks.
    for (auto& level : p.levels) {
      for (auto& b : level) {
        for (double& v : b.ca_reduce_b.mutable_data()) v += 3.0;
        for (double& v : b.ffn_in_b.mutable_data()) v += 3.0;
      }
    }
    TensorD x = ahmsa::testing::random_tensor({2, 3, 8, 8}, 64);
    x.set_requires_grad(false);
    const std::vector<int> labels = {0, 2};
    const auto result = ahmsa::testing::grad_check(p.parameters(), [&] {
      return ops::cross_entropy(forward(x, p), labels);
    });
    CHECK(result.checked == expected_parameter_count(c));
    CHECK(result.max_rel_error < 1e-3);
  }

  TEST_CASE("checkpoint round trip is bit-exact") {
    const auto p = init_model<float>(tiny_config(), 67);
    const auto bytes = encode_checkpoint(p);
    CHECK(bytes[0] == 'A');
    CHECK(bytes[3] == 'C');
    CHECK(bytes[4] == kCheckpointVersion);
    const auto q = decode_checkpoint(bytes);
    CHECK(q.config == p.config);
    CHECK(encode_checkpoint(q) == bytes);
    const auto x = random_input({2, 3, 8, 8}, 12);
    CHECK(bit_equal(forward(x, p), forward(x, q)));

    const auto path = std::filesystem::temp_directory_path() / "ahmsa_ckpt_test.bin";
    save_checkpoint(path, p);
    CHECK(encode_checkpoint(load_checkpoint(path)) == bytes);
    std::filesystem::remove(path);

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(decode_checkpoint(truncated), IoError);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad_magic), IoError);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.bin"), IoError);
  }
}
