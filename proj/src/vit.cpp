// Copyright 2026 The sslvit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sslvit/vit.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

#include "sslvit/errors.hpp"
#include "sslvit/json_util.hpp"
#include "sslvit/serialize.hpp"

namespace sslvit {
namespace {

constexpr char kCheckpointMagic[] = "SVTC";
constexpr std::uint32_t kCheckpointVersion = 1;

Tensor trunc_normal(Shape shape, Rng& rng, bool requires_grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.truncated_normal(0.02);
  return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

Linear make_linear(std::size_t in, std::size_t out, Rng& rng, bool requires_grad) {
  return {trunc_normal({in, out}, rng, requires_grad), Tensor::zeros({out}, requires_grad)};
}

LayerNormParams make_norm(std::size_t dim, bool requires_grad) {
  return {Tensor::full({dim}, 1.0, requires_grad), Tensor::zeros({dim}, requires_grad)};
}

Tensor attention(const TransformerBlock& block, const Tensor& x, std::size_t heads) {
  const std::size_t dim = x.dim(1);
  const std::size_t hd = dim / heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(hd));
  const Tensor qkv = block.qkv.forward(x);
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor q = slice(qkv, 1, h * hd, (h + 1) * hd);
    const Tensor k = slice(qkv, 1, dim + h * hd, dim + (h + 1) * hd);
    const Tensor v = slice(qkv, 1, 2 * dim + h * hd, 2 * dim + (h + 1) * hd);
    const Tensor weights = softmax(scale(matmul(q, transpose(k)), scale_factor), 1);
    outs.push_back(matmul(weights, v));
  }
  const Tensor merged = heads == 1 ? outs[0] : concat(outs, 1);
  return block.proj.forward(merged);
}

Tensor positional_embedding(const ViTParams& params, std::size_t rows, std::size_t cols) {
  const ViTConfig& c = params.config;
  if (rows == c.grid() && cols == c.grid()) return params.pos_embed;
  if (!c.interpolate_pos) {
    throw ShapeError("input yields a " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " patch grid but positional embeddings cover " + std::to_string(c.grid()) +
                     "x" + std::to_string(c.grid()) + " and interpolation is disabled");
  }
  const std::size_t n = c.num_patches();
  const Tensor cls_pos = slice(params.pos_embed, 0, 0, 1);
  const Tensor patch_pos = slice(params.pos_embed, 0, 1, n + 1);
  const Tensor resampled = matmul(bilinear_resample_matrix(c.grid(), rows, cols), patch_pos);
  return concat({cls_pos, resampled}, 0);
}

std::vector<Shape> manifest_shapes(const ViTConfig& c) {
  const std::size_t d = c.dim, h = c.mlp_hidden();
  std::vector<Shape> s = {{c.patch_dim(), d}, {d}, {1, d}, {c.num_patches() + 1, d}};
  for (std::size_t b = 0; b < c.depth; ++b) {
    s.insert(s.end(), {{d}, {d}, {d, 3 * d}, {3 * d}, {d, d}, {d}, {d}, {d}, {d, h}, {h}, {h, d}, {d}});
  }
  s.insert(s.end(), {{d}, {d}, {d, c.out_dim}, {c.out_dim}});
  return s;
}

}  // namespace

void ViTConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvalidArgument("ViTConfig: " + m); };
  if (patch_size == 0 || image_size == 0 || channels == 0 || depth == 0 || heads == 0 ||
      dim == 0 || out_dim == 0)
    fail("all sizes must be positive");
  if (image_size % patch_size != 0)
    fail("image_size " + std::to_string(image_size) + " not divisible by patch_size " +
         std::to_string(patch_size));
  if (dim % heads != 0)
    fail("dim " + std::to_string(dim) + " not divisible by heads " + std::to_string(heads));
  if (!(mlp_ratio > 0.0) || mlp_hidden() == 0) fail("mlp_ratio must be positive");
}

std::size_t ViTConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(dim) * mlp_ratio));
}

nlohmann::json to_json(const ViTConfig& c) {
  return {{"image_size", c.image_size}, {"patch_size", c.patch_size}, {"channels", c.channels},
          {"depth", c.depth},           {"heads", c.heads},           {"dim", c.dim},
          {"mlp_ratio", c.mlp_ratio},   {"out_dim", c.out_dim},       {"interpolate_pos", c.interpolate_pos}};
}

ViTConfig vit_config_from_json(const nlohmann::json& j) {
  using json_util::read_field;
  json_util::require_known_keys(j, "vit",
                                {"image_size", "patch_size", "channels", "depth", "heads", "dim",
                                 "mlp_ratio", "out_dim", "interpolate_pos"});
  ViTConfig c;
  read_field(j, "vit", "image_size", c.image_size);
  read_field(j, "vit", "patch_size", c.patch_size);
  read_field(j, "vit", "channels", c.channels);
  read_field(j, "vit", "depth", c.depth);
  read_field(j, "vit", "heads", c.heads);
  read_field(j, "vit", "dim", c.dim);
  read_field(j, "vit", "mlp_ratio", c.mlp_ratio);
  read_field(j, "vit", "out_dim", c.out_dim);
  read_field(j, "vit", "interpolate_pos", c.interpolate_pos);
  return c;
}

ViTParams ViTParams::init(const ViTConfig& config, Rng& rng, bool requires_grad) {
  config.validate();
  const std::size_t d = config.dim;
  ViTParams p;
  p.config = config;
  p.patch_embed = make_linear(config.patch_dim(), d, rng, requires_grad);
  p.cls_token = Tensor::zeros({1, d}, requires_grad);
  p.pos_embed = trunc_normal({config.num_patches() + 1, d}, rng, requires_grad);
  for (std::size_t b = 0; b < config.depth; ++b) {
    TransformerBlock blk;
    blk.norm1 = make_norm(d, requires_grad);
    blk.qkv = make_linear(d, 3 * d, rng, requires_grad);
    blk.proj = make_linear(d, d, rng, requires_grad);
    blk.norm2 = make_norm(d, requires_grad);
    blk.fc1 = make_linear(d, config.mlp_hidden(), rng, requires_grad);
    blk.fc2 = make_linear(config.mlp_hidden(), d, rng, requires_grad);
    p.blocks.push_back(std::move(blk));
  }
  p.norm = make_norm(d, requires_grad);
  p.head = make_linear(d, config.out_dim, rng, requires_grad);
  return p;
}

std::vector<NamedTensor> ViTParams::named_parameters() const {
  std::vector<NamedTensor> out = {{"patch_embed.weight", patch_embed.weight},
                                  {"patch_embed.bias", patch_embed.bias},
                                  {"cls_token", cls_token},
                                  {"pos_embed", pos_embed}};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const std::string pre = "blocks." + std::to_string(b) + ".";
    const TransformerBlock& k = blocks[b];
    out.insert(out.end(), {{pre + "norm1.weight", k.norm1.weight}, {pre + "norm1.bias", k.norm1.bias},
                           {pre + "attn.qkv.weight", k.qkv.weight}, {pre + "attn.qkv.bias", k.qkv.bias},
                           {pre + "attn.proj.weight", k.proj.weight}, {pre + "attn.proj.bias", k.proj.bias},
                           {pre + "norm2.weight", k.norm2.weight}, {pre + "norm2.bias", k.norm2.bias},
                           {pre + "mlp.fc1.weight", k.fc1.weight}, {pre + "mlp.fc1.bias", k.fc1.bias},
                           {pre + "mlp.fc2.weight", k.fc2.weight}, {pre + "mlp.fc2.bias", k.fc2.bias}});
  }
  out.insert(out.end(), {{"norm.weight", norm.weight},
                         {"norm.bias", norm.bias},
                         {"head.weight", head.weight},
                         {"head.bias", head.bias}});
  if (retrieval) {
    out.push_back({"retrieval.weight", retrieval->weight});
    out.push_back({"retrieval.bias", retrieval->bias});
  }
  return out;
}

std::vector<Tensor> ViTParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& nt : named_parameters()) out.push_back(nt.tensor);
  return out;
}

std::size_t ViTParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& nt : named_parameters()) n += nt.tensor.numel();
  return n;
}

ViTParams ViTParams::clone(bool requires_grad) const {
  auto cl = [requires_grad](const Tensor& t) { return t.clone(requires_grad); };
  auto cl_lin = [&](const Linear& l) { return Linear{cl(l.weight), cl(l.bias)}; };
  auto cl_norm = [&](const LayerNormParams& l) { return LayerNormParams{cl(l.weight), cl(l.bias)}; };
  ViTParams p;
  p.config = config;
  p.patch_embed = cl_lin(patch_embed);
  p.cls_token = cl(cls_token);
  p.pos_embed = cl(pos_embed);
  for (const auto& b : blocks) {
    p.blocks.push_back({cl_norm(b.norm1), cl_lin(b.qkv), cl_lin(b.proj), cl_norm(b.norm2),
                        cl_lin(b.fc1), cl_lin(b.fc2)});
  }
  p.norm = cl_norm(norm);
  p.head = cl_lin(head);
  if (retrieval) p.retrieval = cl_lin(*retrieval);
  return p;
}

void ViTParams::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

std::size_t expected_parameter_count(const ViTConfig& c) {
  const std::size_t d = c.dim, h = c.mlp_hidden();
  const std::size_t per_block = 2 * d + (d * 3 * d + 3 * d) + (d * d + d) + 2 * d + (d * h + h) +
                                (h * d + d);
  return (c.patch_dim() * d + d) + d + (c.num_patches() + 1) * d + c.depth * per_block + 2 * d +
         (d * c.out_dim + c.out_dim);
}

void attach_retrieval_head(ViTParams& params, std::size_t out_dim, Rng& rng) {
  if (out_dim == 0) throw InvalidArgument("retrieval embedding size must be positive");
  params.retrieval = make_linear(params.config.dim, out_dim, rng, params.cls_token.requires_grad());
}

Tensor patchify(const Image& image, std::size_t p) {
  if (p == 0 || image.height % p != 0 || image.width % p != 0) {
    throw ShapeError("patchify: image " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + " not divisible by patch size " +
                     std::to_string(p));
  }
  const std::size_t rows = image.height / p, cols = image.width / p;
  const std::size_t pd = image.channels * p * p;
  std::vector<double> out(rows * cols * pd);
  std::size_t o = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t ch = 0; ch < image.channels; ++ch)
        for (std::size_t y = 0; y < p; ++y)
          for (std::size_t x = 0; x < p; ++x) out[o++] = image.at(ch, r * p + y, c * p + x);
  return Tensor::from_data({rows * cols, pd}, std::move(out));
}

Tensor bilinear_resample_matrix(std::size_t grid_in, std::size_t rows_out, std::size_t cols_out) {
  std::vector<double> m(rows_out * cols_out * grid_in * grid_in, 0.0);
  auto taps = [grid_in](std::size_t i, std::size_t n_out) {
    double src = (static_cast<double>(i) + 0.5) * static_cast<double>(grid_in) /
                     static_cast<double>(n_out) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(grid_in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, grid_in - 1);
    const double w = src - static_cast<double>(lo);
    return std::tuple{lo, hi, w};
  };
  const std::size_t n_in = grid_in * grid_in;
  for (std::size_t r = 0; r < rows_out; ++r) {
    const auto [y0, y1, wy] = taps(r, rows_out);
    for (std::size_t c = 0; c < cols_out; ++c) {
      const auto [x0, x1, wx] = taps(c, cols_out);
      double* row = m.data() + (r * cols_out + c) * n_in;
      row[y0 * grid_in + x0] += (1 - wy) * (1 - wx);
      row[y0 * grid_in + x1] += (1 - wy) * wx;
      row[y1 * grid_in + x0] += wy * (1 - wx);
      row[y1 * grid_in + x1] += wy * wx;
    }
  }
  return Tensor::from_data({rows_out * cols_out, n_in}, std::move(m));
}

Tensor encode(const ViTParams& params, const Image& image) {
  const ViTConfig& c = params.config;
  if (image.channels != c.channels) {
    throw ShapeError("encode: image has " + std::to_string(image.channels) +
                     " channels, model expects " + std::to_string(c.channels));
  }
  const Tensor patches = patchify(image, c.patch_size);
  const Tensor pos =
      positional_embedding(params, image.height / c.patch_size, image.width / c.patch_size);
  Tensor x = concat({params.cls_token, params.patch_embed.forward(patches)}, 0);
  x = add(x, pos);
  for (const auto& block : params.blocks) {
    x = add(x, attention(block, block.norm1.forward(x), c.heads));
    x = add(x, block.fc2.forward(gelu(block.fc1.forward(block.norm2.forward(x)))));
  }
  return reshape(params.norm.forward(slice(x, 0, 0, 1)), {c.dim});
}

Tensor head(const ViTParams& params, const Tensor& embedding) {
  if (embedding.rank() != 1 || embedding.dim(0) != params.config.dim) {
    throw ShapeError("head: embedding shape " + shape_str(embedding.shape()) + ", expected [" +
                     std::to_string(params.config.dim) + "]");
  }
  const Tensor row = reshape(embedding, {1, params.config.dim});
  return reshape(params.head.forward(row), {params.config.out_dim});
}

std::vector<std::uint8_t> encode_checkpoint(const ViTParams& params) {
  ByteWriter w;
  w.put_magic(kCheckpointMagic);
  w.put_u32(kCheckpointVersion);
  w.put_string(to_json(params.config).dump());
  const auto named = params.named_parameters();
  const std::size_t core = named.size() - (params.retrieval ? 2 : 0);
  for (std::size_t i = 0; i < core; ++i) write_tensor(w, named[i].tensor);
  if (params.retrieval) {
    w.put_u32(2);
    write_tensor(w, params.retrieval->weight);
    write_tensor(w, params.retrieval->bias);
  }
  return w.take();
}

void save_checkpoint(const std::filesystem::path& path, const ViTParams& params) {
  write_file_atomic(path, encode_checkpoint(params));
}

ViTParams decode_checkpoint(std::span<const std::uint8_t> bytes, bool requires_grad) {
  ByteReader r(bytes);
  r.expect_magic(kCheckpointMagic);
  const std::uint32_t version = r.get_u32();
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint version " + std::to_string(version) +
                               " is not supported (expected " +
                               std::to_string(kCheckpointVersion) + ")");
  }
  ViTConfig config;
  try {
    config = vit_config_from_json(nlohmann::json::parse(r.get_string()));
    config.validate();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  Rng unused(0);
  ViTParams p = ViTParams::init(config, unused, requires_grad);
  const auto shapes = manifest_shapes(config);
  auto named = p.named_parameters();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    Tensor t = read_tensor(r);
    if (t.shape() != shapes[i]) {
      throw FormatError("checkpoint tensor " + named[i].name + " has shape " +
                        shape_str(t.shape()) + ", expected " + shape_str(shapes[i]));
    }
    auto dst = named[i].tensor.mutable_data();
    std::copy(t.data().begin(), t.data().end(), dst.begin());
  }
  if (r.remaining() > 0) {
    const std::uint32_t extra = r.get_u32();
    if (extra != 2) throw FormatError("checkpoint trailer must hold 2 retrieval tensors");
    Tensor w = read_tensor(r, requires_grad);
    Tensor b = read_tensor(r, requires_grad);
    if (w.rank() != 2 || w.dim(0) != config.dim || b.rank() != 1 || b.dim(0) != w.dim(1))
      throw FormatError("checkpoint retrieval projection has inconsistent shapes");
    p.retrieval = Linear{w, b};
    if (r.remaining() > 0) throw FormatError("trailing bytes after checkpoint");
  }
  return p;
}

ViTParams load_checkpoint(const std::filesystem::path& path, bool requires_grad) {
  const auto bytes = read_file(path);
  return decode_checkpoint(bytes, requires_grad);
}

}  // namespace sslvit
