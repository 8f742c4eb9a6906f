// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 ceutrack contributors
//
// Forward pass of the unified color-event tracking backbone at configurable
// width: four non-shared patch projections, token unification with shared
// position embeddings, pre-norm transformer blocks, cross-attention adapter
// blocks bridging each block's input and output, a three-branch conv head,
// and box decoding. Inference only; parameters are plain tensors that
// round-trip through a flat float32 container with a named manifest.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <string>
#include <vector>

#include "ceutrack/errors.hpp"
#include "ceutrack/events.hpp"
#include "ceutrack/geometry.hpp"
#include "ceutrack/image.hpp"
#include "ceutrack/rng.hpp"
#include "ceutrack/voxel.hpp"

namespace ceutrack {

inline constexpr int kScoreMapSide = 16;

struct ModelConfig {
  int token_width = 64;  // C; the full-scale network documented by the README uses 768
  int n_layers = 12;
  int n_heads = 8;
  int template_px = 128;
  int search_px = 256;
  int frame_patch = 16;
  int voxel_patch = 4;
  int voxel_template_grid = 32;  // 32x32 = 1024 template voxel rows
  int voxel_search_grid = 64;    // 64x64 = 4096 search voxel rows

  int template_tokens() const {  // N_z
    const int s = template_px / frame_patch;
    return s * s;
  }
  int search_tokens() const {  // N_x
    const int s = search_px / frame_patch;
    return s * s;
  }
  int unified_len() const { return 2 * (template_tokens() + search_tokens()); }
  int head_dim() const { return token_width / n_heads; }
  int voxel_template_rows() const { return voxel_template_grid * voxel_template_grid; }
  int voxel_search_rows() const { return voxel_search_grid * voxel_search_grid; }
  int frame_patch_dim() const { return frame_patch * frame_patch * 3; }
  int voxel_patch_dim() const { return voxel_patch * voxel_patch * kVoxelDescriptorDim; }

  void validate() const {
    if (token_width < 1 || n_layers < 1 || n_heads < 1) {
      throw ValidationError("model config: widths and counts must be positive");
    }
    if (token_width % n_heads != 0) {
      throw ValidationError("model config: token width must be divisible by head count");
    }
    if (template_px % frame_patch != 0 || search_px % frame_patch != 0) {
      throw ValidationError("model config: patch size must divide the input sides");
    }
    if (voxel_template_grid % voxel_patch != 0 || voxel_search_grid % voxel_patch != 0) {
      throw ValidationError("model config: voxel patch must divide the voxel grids");
    }
    const int vz = voxel_template_grid / voxel_patch;
    const int vx = voxel_search_grid / voxel_patch;
    if (vz * vz != template_tokens() || vx * vx != search_tokens()) {
      throw ValidationError("model config: voxel token counts must match frame token counts");
    }
    if (search_px / frame_patch != kScoreMapSide) {
      throw ValidationError("model config: head map side must be 16");
    }
  }
};

enum class TokenRole { frame_template, frame_search, voxel_template, voxel_search, unified };

/// Sequence of C-wide tokens, one per row.
struct TokenTensor {
  Eigen::MatrixXf tokens;
  TokenRole role = TokenRole::unified;
};

struct LinearParams {
  Eigen::MatrixXf w;  // (in, out); y = x * w + b
  Eigen::VectorXf b;
};

struct LayerNormParams {
  Eigen::VectorXf gamma;
  Eigen::VectorXf beta;
};

struct AttentionParams {
  LinearParams q, k, v, out;
};

struct MlpParams {
  LinearParams fc1, fc2;  // hidden width 4C, GELU in between
};

struct TransformerBlockParams {
  LayerNormParams ln1, ln2;
  AttentionParams attn;
  MlpParams mlp;
};

/// Cross-attention + FFN bridging a transformer block's input and output.
struct AdapterBlockParams {
  LayerNormParams ln_q, ln_kv, ln_ffn;
  AttentionParams attn;
  MlpParams ffn;
};

/// One 3x3 conv stage (stride 1, pad 1) with folded per-channel affine
/// normalization and a rectifier. Weight layout w[((oc*C_in+ic)*3+ky)*3+kx].
struct ConvStageParams {
  std::vector<float> w;
  std::vector<float> b;
  std::vector<float> norm_gamma;
  std::vector<float> norm_beta;
};

struct HeadBranchParams {
  std::array<ConvStageParams, 4> stages;
  std::vector<float> final_w;  // 1x1 conv, layout w[oc*C_in+ic]
  std::vector<float> final_b;
  int out_channels = 1;
};

struct HeadParams {
  HeadBranchParams score;   // 1 channel
  HeadBranchParams offset;  // 2 channels (x, y)
  HeadBranchParams size;    // 2 channels (w, h)
};

struct ModelParams {
  ModelConfig config;
  LinearParams proj_frame_template, proj_frame_search;
  LinearParams proj_voxel_template, proj_voxel_search;
  Eigen::MatrixXf pos_template;  // N_z x C, shared across modalities
  Eigen::MatrixXf pos_search;    // N_x x C
  std::vector<TransformerBlockParams> blocks;
  std::vector<AdapterBlockParams> adapters;
  HeadParams head;
};

struct HeadOutput {
  std::array<double, kScoreMapSide * kScoreMapSide> score{};        // [i*16+j]
  std::array<double, kScoreMapSide * kScoreMapSide * 2> offset{};   // [(i*16+j)*2 + axis], axis 0 = x
  std::array<double, kScoreMapSide * kScoreMapSide * 2> size{};     // axis 0 = w
};

// ---------------------------------------------------------------------------
// parameter construction
// ---------------------------------------------------------------------------

namespace detail {

inline LinearParams make_linear(int in, int out) {
  return {Eigen::MatrixXf::Zero(in, out), Eigen::VectorXf::Zero(out)};
}

inline LayerNormParams make_layer_norm(int c) {
  return {Eigen::VectorXf::Ones(c), Eigen::VectorXf::Zero(c)};
}

inline AttentionParams make_attention(int c) {
  return {make_linear(c, c), make_linear(c, c), make_linear(c, c), make_linear(c, c)};
}

inline MlpParams make_mlp(int c) {
  return {make_linear(c, 4 * c), make_linear(4 * c, c)};
}

inline ConvStageParams make_conv_stage(int c) {
  ConvStageParams s;
  s.w.assign(std::size_t(c) * c * 9, 0.0f);
  s.b.assign(c, 0.0f);
  s.norm_gamma.assign(c, 1.0f);
  s.norm_beta.assign(c, 0.0f);
  return s;
}

inline HeadBranchParams make_head_branch(int c, int out_channels) {
  HeadBranchParams b;
  for (auto& s : b.stages) s = make_conv_stage(c);
  b.final_w.assign(std::size_t(out_channels) * c, 0.0f);
  b.final_b.assign(out_channels, 0.0f);
  b.out_channels = out_channels;
  return b;
}

}  // namespace detail

/// All-zero parameters (LayerNorm/norm scales at 1) of the given shape.
inline ModelParams make_model_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  const int c = cfg.token_width;
  p.proj_frame_template = detail::make_linear(cfg.frame_patch_dim(), c);
  p.proj_frame_search = detail::make_linear(cfg.frame_patch_dim(), c);
  p.proj_voxel_template = detail::make_linear(cfg.voxel_patch_dim(), c);
  p.proj_voxel_search = detail::make_linear(cfg.voxel_patch_dim(), c);
  p.pos_template = Eigen::MatrixXf::Zero(cfg.template_tokens(), c);
  p.pos_search = Eigen::MatrixXf::Zero(cfg.search_tokens(), c);
  p.blocks.resize(cfg.n_layers);
  p.adapters.resize(cfg.n_layers);
  for (int i = 0; i < cfg.n_layers; ++i) {
    p.blocks[i] = {detail::make_layer_norm(c), detail::make_layer_norm(c),
                   detail::make_attention(c), detail::make_mlp(c)};
    p.adapters[i] = {detail::make_layer_norm(c), detail::make_layer_norm(c),
                     detail::make_layer_norm(c), detail::make_attention(c),
                     detail::make_mlp(c)};
  }
  p.head.score = detail::make_head_branch(c, 1);
  p.head.offset = detail::make_head_branch(c, 2);
  p.head.size = detail::make_head_branch(c, 2);
  return p;
}

/// Visits every learnable tensor in a fixed order as
/// f(name, dims, float pointer, element count). Eigen matrices expose their
/// column-major storage; the order defines both the checkpoint manifest and
/// the toy-initialization stream.
template <typename Params, typename F>
void for_each_tensor(Params& p, F&& f) {
  auto lin = [&](const std::string& name, auto& l) {
    f(name + ".w", std::vector<std::uint32_t>{std::uint32_t(l.w.rows()), std::uint32_t(l.w.cols())},
      l.w.data(), std::size_t(l.w.size()));
    f(name + ".b", std::vector<std::uint32_t>{std::uint32_t(l.b.size())},
      l.b.data(), std::size_t(l.b.size()));
  };
  auto ln = [&](const std::string& name, auto& l) {
    f(name + ".gamma", std::vector<std::uint32_t>{std::uint32_t(l.gamma.size())},
      l.gamma.data(), std::size_t(l.gamma.size()));
    f(name + ".beta", std::vector<std::uint32_t>{std::uint32_t(l.beta.size())},
      l.beta.data(), std::size_t(l.beta.size()));
  };
  auto attn = [&](const std::string& name, auto& a) {
    lin(name + ".q", a.q);
    lin(name + ".k", a.k);
    lin(name + ".v", a.v);
    lin(name + ".out", a.out);
  };
  auto mlp = [&](const std::string& name, auto& m) {
    lin(name + ".fc1", m.fc1);
    lin(name + ".fc2", m.fc2);
  };
  auto vec = [&](const std::string& name, auto& v) {
    f(name, std::vector<std::uint32_t>{std::uint32_t(v.size())}, v.data(), v.size());
  };
  auto branch = [&](const std::string& name, auto& b) {
    for (std::size_t i = 0; i < b.stages.size(); ++i) {
      const std::string s = name + ".stage" + std::to_string(i);
      vec(s + ".conv.w", b.stages[i].w);
      vec(s + ".conv.b", b.stages[i].b);
      vec(s + ".norm.gamma", b.stages[i].norm_gamma);
      vec(s + ".norm.beta", b.stages[i].norm_beta);
    }
    vec(name + ".final.w", b.final_w);
    vec(name + ".final.b", b.final_b);
  };

  lin("proj.frame_template", p.proj_frame_template);
  lin("proj.frame_search", p.proj_frame_search);
  lin("proj.voxel_template", p.proj_voxel_template);
  lin("proj.voxel_search", p.proj_voxel_search);
  f("pos.template",
    std::vector<std::uint32_t>{std::uint32_t(p.pos_template.rows()), std::uint32_t(p.pos_template.cols())},
    p.pos_template.data(), std::size_t(p.pos_template.size()));
  f("pos.search",
    std::vector<std::uint32_t>{std::uint32_t(p.pos_search.rows()), std::uint32_t(p.pos_search.cols())},
    p.pos_search.data(), std::size_t(p.pos_search.size()));
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string b = "block." + std::to_string(i);
    ln(b + ".ln1", p.blocks[i].ln1);
    attn(b + ".attn", p.blocks[i].attn);
    ln(b + ".ln2", p.blocks[i].ln2);
    mlp(b + ".mlp", p.blocks[i].mlp);
  }
  for (std::size_t i = 0; i < p.adapters.size(); ++i) {
    const std::string a = "adapter." + std::to_string(i);
    ln(a + ".ln_q", p.adapters[i].ln_q);
    ln(a + ".ln_kv", p.adapters[i].ln_kv);
    attn(a + ".attn", p.adapters[i].attn);
    ln(a + ".ln_ffn", p.adapters[i].ln_ffn);
    mlp(a + ".ffn", p.adapters[i].ffn);
  }
  branch("head.score", p.head.score);
  branch("head.offset", p.head.offset);
  branch("head.size", p.head.size);
}

/// Deterministic toy initialization: every tensor filled with seeded uniform
/// values in [-0.02, 0.02] in manifest order.
inline ModelParams init_toy_params(const ModelConfig& cfg, std::uint32_t seed) {
  ModelParams p = make_model_params(cfg);
  std::mt19937 rng(seed);
  for_each_tensor(p, [&](const std::string&, const std::vector<std::uint32_t>&, float* data,
                         std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) data[i] = uniform_range(rng, -0.02f, 0.02f);
  });
  return p;
}

// ---------------------------------------------------------------------------
// forward pass
// ---------------------------------------------------------------------------

namespace detail {

inline void require_finite(const Eigen::MatrixXf& m, const char* where) {
  if (!m.allFinite()) throw ValidationError(std::string("non-finite values in ") + where);
}

inline Eigen::MatrixXf layer_norm(const Eigen::MatrixXf& u, const LayerNormParams& p) {
  constexpr float eps = 1e-5f;
  Eigen::MatrixXf out(u.rows(), u.cols());
  for (Eigen::Index r = 0; r < u.rows(); ++r) {
    const float mean = u.row(r).mean();
    const float var = (u.row(r).array() - mean).square().mean();
    const float inv = 1.0f / std::sqrt(var + eps);
    out.row(r) = (((u.row(r).array() - mean) * inv) * p.gamma.transpose().array()) +
                 p.beta.transpose().array();
  }
  return out;
}

inline void softmax_rows_inplace(Eigen::MatrixXf& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const float mx = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - mx).exp();
    m.row(r) /= m.row(r).sum();
  }
}

inline Eigen::MatrixXf apply_linear(const Eigen::MatrixXf& x, const LinearParams& l) {
  return (x * l.w).rowwise() + l.b.transpose();
}

/// Multi-head scaled dot-product attention; self-attention is the
/// q_in == kv_in case. When probs_out is non-null the per-head softmax
/// matrices are appended to it (diagnostics/tests).
inline Eigen::MatrixXf multi_head_attention(const Eigen::MatrixXf& q_in,
                                            const Eigen::MatrixXf& kv_in,
                                            const AttentionParams& p, int n_heads,
                                            std::vector<Eigen::MatrixXf>* probs_out = nullptr) {
  const Eigen::Index c = q_in.cols();
  const Eigen::Index d = c / n_heads;
  const Eigen::MatrixXf q = apply_linear(q_in, p.q);
  const Eigen::MatrixXf k = apply_linear(kv_in, p.k);
  const Eigen::MatrixXf v = apply_linear(kv_in, p.v);
  Eigen::MatrixXf concat(q_in.rows(), c);
  const float scale = 1.0f / std::sqrt(float(d));
  for (int h = 0; h < n_heads; ++h) {
    Eigen::MatrixXf scores =
        (q.middleCols(h * d, d) * k.middleCols(h * d, d).transpose()) * scale;
    softmax_rows_inplace(scores);
    if (probs_out) probs_out->push_back(scores);
    concat.middleCols(h * d, d) = scores * v.middleCols(h * d, d);
  }
  return apply_linear(concat, p.out);
}

inline float gelu(float x) {
  return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f));
}

inline Eigen::MatrixXf mlp_forward(const Eigen::MatrixXf& x, const MlpParams& p) {
  Eigen::MatrixXf hidden = apply_linear(x, p.fc1);
  hidden = hidden.unaryExpr([](float v) { return gelu(v); });
  return apply_linear(hidden, p.fc2);
}

}  // namespace detail

/// Pre-norm transformer block: U~ = U + MSA(LN(U)); U' = U~ + MLP(LN(U~)).
inline Eigen::MatrixXf transformer_block(const Eigen::MatrixXf& u,
                                         const TransformerBlockParams& p, int n_heads,
                                         std::vector<Eigen::MatrixXf>* probs_out = nullptr) {
  detail::require_finite(u, "transformer_block input");
  const Eigen::MatrixXf mid =
      u + detail::multi_head_attention(detail::layer_norm(u, p.ln1),
                                       detail::layer_norm(u, p.ln1), p.attn, n_heads, probs_out);
  Eigen::MatrixXf out = mid + detail::mlp_forward(detail::layer_norm(mid, p.ln2), p.mlp);
  detail::require_finite(out, "transformer_block output");
  return out;
}

/// Adapter: A = U_out + CrossAttn(q = LN(U_out) + P, kv = LN(U_in) + P);
/// U'' = A + FFN(LN(A)). P is the role-aligned backbone position embedding.
inline Eigen::MatrixXf adapter_block(const Eigen::MatrixXf& u_in, const Eigen::MatrixXf& u_out,
                                     const AdapterBlockParams& p, const Eigen::MatrixXf& pos,
                                     int n_heads,
                                     std::vector<Eigen::MatrixXf>* probs_out = nullptr) {
  if (u_in.rows() != u_out.rows() || u_in.cols() != u_out.cols() ||
      pos.rows() != u_in.rows() || pos.cols() != u_in.cols()) {
    throw ValidationError("adapter_block shape mismatch");
  }
  const Eigen::MatrixXf a =
      u_out + detail::multi_head_attention(detail::layer_norm(u_out, p.ln_q) + pos,
                                           detail::layer_norm(u_in, p.ln_kv) + pos, p.attn,
                                           n_heads, probs_out);
  Eigen::MatrixXf out = a + detail::mlp_forward(detail::layer_norm(a, p.ln_ffn), p.ffn);
  detail::require_finite(out, "adapter_block output");
  return out;
}

/// Non-overlapping frame_patch x frame_patch patches flattened row-major
/// (pixel-major, channel-minor) and linearly projected to C.
inline TokenTensor project_frame_tokens(const Image& patch, const LinearParams& proj,
                                        const ModelConfig& cfg, TokenRole role) {
  if (role != TokenRole::frame_template && role != TokenRole::frame_search) {
    throw ValidationError("project_frame_tokens: bad role");
  }
  const int side = role == TokenRole::frame_template ? cfg.template_px : cfg.search_px;
  if (patch.w != side || patch.h != side || patch.channels != 3) {
    throw ValidationError("project_frame_tokens: expected " + std::to_string(side) + "x" +
                          std::to_string(side) + "x3 input");
  }
  const int ps = cfg.frame_patch;
  const int grid = side / ps;
  const int dim = cfg.frame_patch_dim();
  Eigen::MatrixXf flat(grid * grid, dim);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      int col = 0;
      for (int py = 0; py < ps; ++py) {
        for (int px = 0; px < ps; ++px) {
          for (int ch = 0; ch < 3; ++ch) {
            flat(gy * grid + gx, col++) = patch.at(gx * ps + px, gy * ps + py, ch);
          }
        }
      }
    }
  }
  return {detail::apply_linear(flat, proj), role};
}

/// VoxelTensor rows reshaped row-major to the role's square grid of 19-channel
/// cells, then projected from non-overlapping voxel_patch x voxel_patch patches.
inline TokenTensor project_voxel_tokens(const VoxelTensor& vt, const LinearParams& proj,
                                        const ModelConfig& cfg, TokenRole role) {
  if (role != TokenRole::voxel_template && role != TokenRole::voxel_search) {
    throw ValidationError("project_voxel_tokens: bad role");
  }
  const int grid =
      role == TokenRole::voxel_template ? cfg.voxel_template_grid : cfg.voxel_search_grid;
  if (vt.k != grid * grid || int(vt.rows.size()) != vt.k) {
    throw ValidationError("project_voxel_tokens: expected k = " + std::to_string(grid * grid) +
                          " rows, got " + std::to_string(vt.k));
  }
  const int ps = cfg.voxel_patch;
  const int tgrid = grid / ps;
  const int dim = cfg.voxel_patch_dim();
  Eigen::MatrixXf flat(tgrid * tgrid, dim);
  auto descriptor = [&](int row, int ch) -> float {
    const Voxel& v = vt.rows[row];
    switch (ch) {
      case 0: return float(v.cx);
      case 1: return float(v.cy);
      case 2: return float(v.cz);
      default: return float(v.feat[ch - 3]);
    }
  };
  for (int gy = 0; gy < tgrid; ++gy) {
    for (int gx = 0; gx < tgrid; ++gx) {
      int col = 0;
      for (int py = 0; py < ps; ++py) {
        for (int px = 0; px < ps; ++px) {
          const int row = (gy * ps + py) * grid + (gx * ps + px);
          for (int ch = 0; ch < kVoxelDescriptorDim; ++ch) {
            flat(gy * tgrid + gx, col++) = descriptor(row, ch);
          }
        }
      }
    }
  }
  return {detail::apply_linear(flat, proj), role};
}

/// Unified token sequence [fz + Pz, fx + Px, vz + Pz, vx + Px], length
/// 2(N_z + N_x); the same embeddings are added to both modalities.
inline TokenTensor unify(const TokenTensor& fz, const TokenTensor& fx, const TokenTensor& vz,
                         const TokenTensor& vx, const Eigen::MatrixXf& pos_z,
                         const Eigen::MatrixXf& pos_x) {
  if (fz.role != TokenRole::frame_template || fx.role != TokenRole::frame_search ||
      vz.role != TokenRole::voxel_template || vx.role != TokenRole::voxel_search) {
    throw ValidationError("unify: role mismatch");
  }
  const Eigen::Index nz = pos_z.rows();
  const Eigen::Index nx = pos_x.rows();
  const Eigen::Index c = pos_z.cols();
  if (fz.tokens.rows() != nz || vz.tokens.rows() != nz || fx.tokens.rows() != nx ||
      vx.tokens.rows() != nx || fz.tokens.cols() != c || fx.tokens.cols() != c ||
      vz.tokens.cols() != c || vx.tokens.cols() != c || pos_x.cols() != c) {
    throw ValidationError("unify: shape mismatch");
  }
  TokenTensor u;
  u.role = TokenRole::unified;
  u.tokens.resize(2 * (nz + nx), c);
  u.tokens.topRows(nz) = fz.tokens + pos_z;
  u.tokens.middleRows(nz, nx) = fx.tokens + pos_x;
  u.tokens.middleRows(nz + nx, nz) = vz.tokens + pos_z;
  u.tokens.bottomRows(nx) = vx.tokens + pos_x;
  return u;
}

/// Position embeddings aligned with the unified token order.
inline Eigen::MatrixXf unified_position_embedding(const ModelParams& p) {
  const Eigen::Index nz = p.pos_template.rows();
  const Eigen::Index nx = p.pos_search.rows();
  Eigen::MatrixXf pos(2 * (nz + nx), p.pos_template.cols());
  pos.topRows(nz) = p.pos_template;
  pos.middleRows(nz, nx) = p.pos_search;
  pos.middleRows(nz + nx, nz) = p.pos_template;
  pos.bottomRows(nx) = p.pos_search;
  return pos;
}

/// project -> unify -> n_layers x (transformer block, then adapter consuming
/// that block's input and output).
inline TokenTensor forward_backbone(const Image& frame_template, const Image& frame_search,
                                    const VoxelTensor& voxel_template,
                                    const VoxelTensor& voxel_search, const ModelParams& p) {
  const ModelConfig& cfg = p.config;
  cfg.validate();
  const TokenTensor fz =
      project_frame_tokens(frame_template, p.proj_frame_template, cfg, TokenRole::frame_template);
  const TokenTensor fx =
      project_frame_tokens(frame_search, p.proj_frame_search, cfg, TokenRole::frame_search);
  const TokenTensor vz =
      project_voxel_tokens(voxel_template, p.proj_voxel_template, cfg, TokenRole::voxel_template);
  const TokenTensor vx =
      project_voxel_tokens(voxel_search, p.proj_voxel_search, cfg, TokenRole::voxel_search);
  TokenTensor u = unify(fz, fx, vz, vx, p.pos_template, p.pos_search);
  const Eigen::MatrixXf pos = unified_position_embedding(p);
  for (int layer = 0; layer < cfg.n_layers; ++layer) {
    const Eigen::MatrixXf block_in = u.tokens;
    const Eigen::MatrixXf block_out = transformer_block(block_in, p.blocks[layer], cfg.n_heads);
    u.tokens = adapter_block(block_in, block_out, p.adapters[layer], pos, cfg.n_heads);
  }
  return u;
}

namespace detail {

// 3x3 conv (stride 1, pad 1) + per-channel affine + ReLU over an HWC map.
inline std::vector<float> conv_stage(const std::vector<float>& in, int side, int channels,
                                     const ConvStageParams& p) {
  std::vector<float> out(std::size_t(side) * side * channels, 0.0f);
  for (int oc = 0; oc < channels; ++oc) {
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        float acc = p.b[oc];
        for (int ky = 0; ky < 3; ++ky) {
          const int yy = y + ky - 1;
          if (yy < 0 || yy >= side) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int xx = x + kx - 1;
            if (xx < 0 || xx >= side) continue;
            const float* wrow = &p.w[((std::size_t(oc) * channels) * 3 + ky) * 3 + kx];
            for (int ic = 0; ic < channels; ++ic) {
              acc += wrow[std::size_t(ic) * 9] * in[(std::size_t(yy) * side + xx) * channels + ic];
            }
          }
        }
        acc = p.norm_gamma[oc] * acc + p.norm_beta[oc];
        out[(std::size_t(y) * side + x) * channels + oc] = acc > 0.0f ? acc : 0.0f;
      }
    }
  }
  return out;
}

inline std::vector<float> head_branch(const std::vector<float>& in, int side, int channels,
                                      const HeadBranchParams& p) {
  std::vector<float> cur = in;
  for (const auto& stage : p.stages) cur = conv_stage(cur, side, channels, stage);
  std::vector<float> out(std::size_t(side) * side * p.out_channels, 0.0f);
  for (int oc = 0; oc < p.out_channels; ++oc) {
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        float acc = p.final_b[oc];
        for (int ic = 0; ic < channels; ++ic) {
          acc += p.final_w[std::size_t(oc) * channels + ic] *
                 cur[(std::size_t(y) * side + x) * channels + ic];
        }
        out[(std::size_t(y) * side + x) * p.out_channels + oc] = acc;
      }
    }
  }
  return out;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

/// The two search-token groups are averaged element-wise, laid out as a
/// 16x16xC map (token i*16+j at row i, col j), and passed through the three
/// conv branches; all outputs squash through a sigmoid.
inline HeadOutput tracking_head(const TokenTensor& unified, const HeadParams& head,
                                const ModelConfig& cfg) {
  if (unified.role != TokenRole::unified || unified.tokens.rows() != cfg.unified_len() ||
      unified.tokens.cols() != cfg.token_width) {
    throw ValidationError("tracking_head: expected unified tokens of configured shape");
  }
  const int nz = cfg.template_tokens();
  const int nx = cfg.search_tokens();
  const int c = cfg.token_width;
  const int side = kScoreMapSide;
  std::vector<float> fused(std::size_t(nx) * c);
  for (int i = 0; i < nx; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      fused[std::size_t(i) * c + ch] =
          0.5f * (unified.tokens(nz + i, ch) + unified.tokens(2 * nz + nx + i, ch));
    }
  }
  const std::vector<float> score = detail::head_branch(fused, side, c, head.score);
  const std::vector<float> offset = detail::head_branch(fused, side, c, head.offset);
  const std::vector<float> size = detail::head_branch(fused, side, c, head.size);
  HeadOutput out;
  for (int i = 0; i < side * side; ++i) {
    out.score[i] = detail::sigmoid(score[i]);
    out.offset[i * 2 + 0] = detail::sigmoid(offset[i * 2 + 0]);
    out.offset[i * 2 + 1] = detail::sigmoid(offset[i * 2 + 1]);
    out.size[i * 2 + 0] = detail::sigmoid(size[i * 2 + 0]);
    out.size[i * 2 + 1] = detail::sigmoid(size[i * 2 + 1]);
  }
  return out;
}

/// Argmax decode (ties broken row-major): normalized center
/// ((j + offset_x)/16, (i + offset_y)/16) and normalized size, mapped into
/// the search region's pixel frame.
inline BBox decode_box(const HeadOutput& head, const Region& search_region) {
  int best = 0;
  for (int i = 1; i < kScoreMapSide * kScoreMapSide; ++i) {
    if (head.score[i] > head.score[best]) best = i;
  }
  const int bi = best / kScoreMapSide;
  const int bj = best % kScoreMapSide;
  const double ncx = (bj + head.offset[best * 2 + 0]) / kScoreMapSide;
  const double ncy = (bi + head.offset[best * 2 + 1]) / kScoreMapSide;
  const double w = head.size[best * 2 + 0] * search_region.side_w;
  const double h = head.size[best * 2 + 1] * search_region.side_h;
  const double cx = search_region.left() + ncx * search_region.side_w;
  const double cy = search_region.top() + ncy * search_region.side_h;
  return {cx - w / 2.0, cy - h / 2.0, w, h};
}

struct TrackerConfig {
  int grid_m = 34;
  int grid_n = 26;
  int grid_tau = 20;
  int topk_search = 4096;
  int topk_template = 1024;
  double template_factor = 2.0;
  double search_factor = 4.0;
};

/// Full inference: the template (color patch + voxel tensor) is fixed from
/// frame 0 and the first inter-frame event window; every later frame crops a
/// search region around the previous prediction, voxelizes its window, and
/// decodes a new box. The template is never updated.
inline std::vector<BBox> track_sequence(const std::vector<Image>& frames,
                                        const std::vector<std::uint64_t>& frame_times,
                                        const std::vector<EventPoint>& events,
                                        const BBox& init_box, const ModelParams& params,
                                        const TrackerConfig& tcfg) {
  if (frames.empty()) throw ValidationError("track_sequence: no frames");
  if (frames.size() != frame_times.size()) {
    throw ValidationError("track_sequence: frames and frame_times differ in length");
  }
  if (init_box.w <= 0.0 || init_box.h <= 0.0) {
    throw ValidationError("track_sequence: degenerate init box");
  }
  const ModelConfig& mcfg = params.config;
  mcfg.validate();
  if (tcfg.topk_template != mcfg.voxel_template_rows() ||
      tcfg.topk_search != mcfg.voxel_search_rows()) {
    throw ValidationError("track_sequence: top-k sizes must match the model's voxel grids");
  }

  std::vector<BBox> boxes;
  boxes.reserve(frames.size());
  boxes.push_back(init_box);
  if (frames.size() == 1) return boxes;

  const int w = frames[0].w;
  const int h = frames[0].h;
  auto grid_for = [&](std::uint64_t t0, std::uint64_t t1) {
    GridSpec g;
    g.m = tcfg.grid_m;
    g.n = tcfg.grid_n;
    g.tau = tcfg.grid_tau;
    g.sensor_w = static_cast<std::uint16_t>(w);
    g.sensor_h = static_cast<std::uint16_t>(h);
    g.t_start = t0;
    g.t_end = t1;
    return g;
  };

  // Template fixed at frame 0, voxel template from the first window.
  const Region region_z = crop_region(init_box, tcfg.template_factor, w, h);
  const Image patch_z = crop_resize(to_three_channels(frames[0]), region_z, mcfg.template_px,
                                    mcfg.template_px);
  const EventWindow window0 = slice_window(events, frame_times[0], frame_times[1],
                                           std::uint16_t(w), std::uint16_t(h));
  const VoxelSet voxels0 = voxelize(window0, grid_for(frame_times[0], frame_times[1]));
  const VoxelTensor voxel_z = select_top_k(filter_voxels(voxels0, region_z), tcfg.topk_template);

  for (std::size_t r = 1; r < frames.size(); ++r) {
    const Region region_x = crop_region(boxes.back(), tcfg.search_factor, w, h);
    const Image patch_x = crop_resize(to_three_channels(frames[r]), region_x, mcfg.search_px,
                                      mcfg.search_px);
    const EventWindow window = slice_window(events, frame_times[r - 1], frame_times[r],
                                            std::uint16_t(w), std::uint16_t(h));
    const VoxelSet voxels = voxelize(window, grid_for(frame_times[r - 1], frame_times[r]));
    const VoxelTensor voxel_x = select_top_k(filter_voxels(voxels, region_x), tcfg.topk_search);
    const TokenTensor u = forward_backbone(patch_z, patch_x, voxel_z, voxel_x, params);
    const HeadOutput head = tracking_head(u, params.head, mcfg);
    boxes.push_back(decode_box(head, region_x));
  }
  return boxes;
}

// ---------------------------------------------------------------------------
// checkpoint container: magic "CEUP", u32 version, config block, manifest
// (name, dims, float offset), then the flat little-endian float32 payload
// ---------------------------------------------------------------------------

namespace detail {

inline void put_string(std::vector<unsigned char>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

struct ByteReader {
  const unsigned char* data;
  std::size_t size;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (pos + n > size) throw ParseError("truncated checkpoint", static_cast<long long>(size));
  }
  std::uint32_t u32() {
    need(4);
    const std::uint32_t v = get_u32(data + pos);
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    const std::uint64_t v = get_u64(data + pos);
    pos += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(data + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace detail

inline std::vector<unsigned char> save_params(const ModelParams& params) {
  std::vector<unsigned char> out;
  out.insert(out.end(), {'C', 'E', 'U', 'P'});
  detail::put_u32(out, 1);  // version

  const ModelConfig& c = params.config;
  const std::vector<std::pair<std::string, std::int64_t>> config_entries = {
      {"token_width", c.token_width},[[maybe_unused]]
      {"n_layers", c.n_layers},
      {"n_heads", c.n_heads},
      {"template_px", c.template_px},
      {"search_px", c.search_px},
      {"frame_patch", c.frame_patch},
      {"voxel_patch", c.voxel_patch},
      {"voxel_template_grid", c.voxel_template_grid},
      {"voxel_search_grid", c.voxel_search_grid}};
  detail::put_u32(out, static_cast<std::uint32_t>(config_entries.size()));
  for (const auto& [key, value] : config_entries) {
    detail::put_string(out, key);
    detail::put_u64(out, static_cast<std::uint64_t>(value));
  }

  struct Entry {
    std::string name;
    std::vector<std::uint32_t> dims;
    const float* data;
    std::size_t count;
  };
  std::vector<Entry> entries;
  std::uint64_t total = 0;
  for_each_tensor(params, [&](const std::string& name, const std::vector<std::uint32_t>& dims,
                              const float* data, std::size_t n) {
    entries.push_back({name, dims, data, n});
    total += n;
  });
  detail::put_u32(out, static_cast<std::uint32_t>(entries.size()));
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    detail::put_string(out, e.name);
    detail::put_u32(out, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) detail::put_u32(out, d);
    detail::put_u64(out, offset);
    offset += e.count;
  }
  detail::put_u64(out, total);
  for (const auto& e : entries) {
    for (std::size_t i = 0; i < e.count; ++i) detail::put_f32(out, e.data[i]);
  }
  return out;
}

inline ModelParams load_params(const unsigned char* data, std::size_t size) {
  detail::ByteReader r{data, size};
  r.need(4);
  if (!(data[0] == 'C' && data[1] == 'E' && data[2] == 'U' && data[3] == 'P')) {
    throw ParseError("bad magic, expected 'CEUP'", 0);
  }
  r.pos = 4;
  const std::uint32_t version = r.u32();
  if (version != 1) throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);

  ModelConfig cfg;
  const std::uint32_t n_config = r.u32();
  for (std::uint32_t i = 0; i < n_config; ++i) {
    const std::string key = r.str();
    const std::int64_t value = static_cast<std::int64_t>(r.u64());
    if (key == "token_width") cfg.token_width = int(value);
    else if (key == "n_layers") cfg.n_layers = int(value);
    else if (key == "n_heads") cfg.n_heads = int(value);
    else if (key == "template_px") cfg.template_px = int(value);
    else if (key == "search_px") cfg.search_px = int(value);
    else if (key == "frame_patch") cfg.frame_patch = int(value);
    else if (key == "voxel_patch") cfg.voxel_patch = int(value);
    else if (key == "voxel_template_grid") cfg.voxel_template_grid = int(value);
    else if (key == "voxel_search_grid") cfg.voxel_search_grid = int(value);
    else throw ParseError("unknown checkpoint config key '" + key + "'");
  }

  struct ManifestEntry {
    std::string name;
    std::vector<std::uint32_t> dims;
    std::uint64_t offset;
  };
  const std::uint32_t n_tensors = r.u32();
  std::vector<ManifestEntry> manifest(n_tensors);
  for (auto& e : manifest) {
    e.name = r.str();
    const std::uint32_t ndim = r.u32();
    e.dims.resize(ndim);
    for (auto& d : e.dims) d = r.u32();
    e.offset = r.u64();
  }
  const std::uint64_t total = r.u64();
  r.need(total * 4);
  const unsigned char* payload = data + r.pos;

  ModelParams params = make_model_params(cfg);
  std::size_t cursor = 0;  // manifest entries are stored in for_each_tensor order
  for_each_tensor(params, [&](const std::string& name, const std::vector<std::uint32_t>& dims,
                              float* dst, std::size_t n) {
    if (cursor >= manifest.size()) throw ParseError("checkpoint manifest too short");
    const ManifestEntry& e = manifest[cursor++];
    if (e.name != name || e.dims != dims) {
      throw ParseError("checkpoint tensor '" + e.name + "' does not match expected '" + name + "'");
    }
    if (e.offset + n > total) throw ParseError("checkpoint tensor '" + name + "' out of bounds");
    for (std::size_t i = 0; i < n; ++i) dst[i] = detail::get_f32(payload + (e.offset + i) * 4);
  });
  if (cursor != manifest.size()) throw ParseError("checkpoint has extra tensors");
  return params;
}

inline ModelParams load_params(const std::vector<unsigned char>& bytes) {
  return load_params(bytes.data(), bytes.size());
}

}  // namespace ceutrack
