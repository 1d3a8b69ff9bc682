#include "miro/model.hpp"

#include <array>
#include <cmath>

#include "miro/config.hpp"
#include "miro/io.hpp"
#include "miro/rng.hpp"

namespace miro {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

void add_into(Matrix& a, const Matrix& b) {
  auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
}

Matrix block_cols(const Matrix& w, std::size_t c0, std::size_t width) {
  Matrix out(w.rows(), width);
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) out(r, c) = w(r, c0 + c);
  return out;
}

void add_block_cols(Matrix& w, std::size_t c0, const Matrix& blk) {
  for (std::size_t r = 0; r < blk.rows(); ++r)
    for (std::size_t c = 0; c < blk.cols(); ++c) w(r, c0 + c) += blk(r, c);
}

// Column blocks of phi's weight: 0 v'_i, 1 u_i, 2 v'_j, 3 u_j, 4 e'_ij, 5 f_ij.
std::array<Matrix, 6> phi_blocks(const Matrix& w, std::size_t latent) {
  std::array<Matrix, 6> out;
  for (std::size_t b = 0; b < 6; ++b) out[b] = block_cols(w, b * latent, latent);
  return out;
}

void check_shapes(const LocGraph& g, const ModelParams& p) {
  const auto& c = p.config;
  require(g.node_feats.rows() == g.n_nodes(), "forward: node feature rows do not match node count");
  require(g.node_feats.cols() == c.n_eigs, "forward: graph has " + std::to_string(g.node_feats.cols()) +
                                               " node features, model expects " + std::to_string(c.n_eigs));
  require(g.edge_feats.rows() == g.n_edges() && g.edge_feats.cols() == 3, "forward: edge feature shape mismatch");
  require(g.dst.size() == g.src.size(), "forward: edge endpoint arrays differ in length");
  const std::size_t L = c.latent_dim;
  require(p.node_encoder.w.rows() == L && p.node_encoder.w.cols() == c.n_eigs, "forward: node encoder shape mismatch");
  require(p.edge_encoder.w.rows() == L && p.edge_encoder.w.cols() == 3, "forward: edge encoder shape mismatch");
  require(p.phi.w.rows() == L && p.phi.w.cols() == 6 * L, "forward: phi shape mismatch");
  require(p.psi.w.rows() == L && p.psi.w.cols() == L, "forward: psi shape mismatch");
  require(p.disp_decoder.w.rows() == 2 && p.disp_decoder.w.cols() == L, "forward: displacement decoder shape mismatch");
  require(p.class_decoder.w.rows() == c.n_classes, "forward: class decoder shape mismatch");
  for (std::size_t e = 0; e < g.n_edges(); ++e)
    require(g.src[e] < g.n_nodes() && g.dst[e] < g.n_nodes(), "forward: edge index out of range");
}

}  // namespace

void ModelConfig::validate() const {
  require(latent_dim >= 1, "model: latent_dim must be >= 1");
  require(K >= 1, "model: K must be >= 1");
  require(n_eigs >= 1, "model: n_eigs must be >= 1");
  require(length_scale_nm > 0.0 && std::isfinite(length_scale_nm), "model: length_scale_nm must be > 0");
  require(!k_star || (*k_star >= 1 && *k_star < K), "model: k_star must satisfy 1 <= k_star < K");
}

ModelParams::ModelParams(const ModelConfig& cfg)
    : config(cfg),
      node_encoder(cfg.latent_dim, cfg.n_eigs),
      edge_encoder(cfg.latent_dim, 3),
      phi(cfg.latent_dim, 6 * cfg.latent_dim),
      psi(cfg.latent_dim, cfg.latent_dim),
      disp_decoder(2, cfg.latent_dim),
      class_decoder(cfg.n_classes, cfg.latent_dim) {
  cfg.validate();
}

std::vector<TensorView> ModelParams::tensors() {
  std::vector<TensorView> out;
  auto add = [&](const std::string& name, Linear& l) {
    out.push_back({name + ".weight", {l.w.rows(), l.w.cols()}, l.w.values()});
    out.push_back({name + ".bias", {l.b.size()}, l.b});
  };
  add("node_encoder", node_encoder);
  add("edge_encoder", edge_encoder);
  add("phi", phi);
  add("psi", psi);
  add("disp_decoder", disp_decoder);
  if (config.n_classes > 0) add("class_decoder", class_decoder);
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : const_cast<ModelParams*>(this)->tensors()) n += v.data.size();
  return n;
}

void ModelParams::set_zero() {
  for (auto& t : tensors()) std::fill(t.data.begin(), t.data.end(), 0.0);
}

void ModelParams::check_finite() const {
  for (const auto& t : const_cast<ModelParams*>(this)->tensors())
    for (double v : t.data) require(std::isfinite(v), "model: non-finite value in " + t.name);
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p(cfg);
  Rng rng(seed);
  for (auto& t : p.tensors()) {
    if (t.shape.size() != 2) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape[1]));
    for (double& v : t.data) v = uniform(rng, -bound, bound);
  }
  return p;
}

StepOutputs forward(const LocGraph& g, const ModelParams& params, ForwardTape* tape) {
  check_shapes(g, params);
  const auto& cfg = params.config;
  const std::size_t n = g.n_nodes(), ne = g.n_edges(), L = cfg.latent_dim;
  const double scale = cfg.length_scale_nm;

  Matrix edge_in(ne, 3);
  for (std::size_t e = 0; e < ne; ++e) {
    edge_in(e, 0) = g.edge_feats(e, 0) / scale;
    edge_in(e, 1) = g.edge_feats(e, 1);
    edge_in(e, 2) = g.edge_feats(e, 2);
  }
  Matrix v_lat, e_lat;
  kernels::linear(g.node_feats, params.node_encoder.w, params.node_encoder.b, v_lat);
  kernels::linear(edge_in, params.edge_encoder.w, params.edge_encoder.b, e_lat);

  const auto w = phi_blocks(params.phi.w, L);
  Matrix p_src, p_dst, r_edge;
  kernels::linear(v_lat, w[0], {}, p_src);
  kernels::linear(v_lat, w[2], {}, p_dst);
  kernels::linear(e_lat, w[4], params.phi.b, r_edge);

  auto by_src = kernels::group_by(g.src, n);

  Matrix u(n, L), f(ne, L);
  if (tape) {
    tape->u.assign(1, u);
    tape->f.assign(1, f);
    tape->s.clear();
  }

  StepOutputs out;
  Matrix a, b, c, z, s, u_next;
  for (std::size_t k = 0; k < cfg.K; ++k) {
    if (k == 0) {
      a = p_src;
      b = p_dst;
      c = r_edge;
    } else {
      kernels::linear(u, w[1], {}, a);
      add_into(a, p_src);
      kernels::linear(u, w[3], {}, b);
      add_into(b, p_dst);
      kernels::linear(f, w[5], {}, c);
      add_into(c, r_edge);
    }
    kernels::edge_combine(a, b, c, g.src, g.dst, z);
    kernels::relu(z);
    kernels::segment_sum(z, by_src, s);
    kernels::linear(s, params.psi.w, params.psi.b, u_next);
    kernels::relu(u_next);

    Matrix disp;
    kernels::linear(u_next, params.disp_decoder.w, params.disp_decoder.b, disp);
    for (double& v : disp.values()) v *= scale;
    out.displacements.push_back(std::move(disp));
    if (cfg.n_classes > 0) {
      Matrix logits;
      kernels::linear(u_next, params.class_decoder.w, params.class_decoder.b, logits);
      out.class_logits.push_back(std::move(logits));
    }

    if (tape) {
      tape->f.push_back(z);
      tape->s.push_back(s);
      tape->u.push_back(u_next);
    }
    f = std::move(z);
    u = std::move(u_next);
    z = Matrix();
    u_next = Matrix();
  }

  if (tape) {
    tape->edge_input = std::move(edge_in);
    tape->v_lat = std::move(v_lat);
    tape->e_lat = std::move(e_lat);
    tape->p_src = std::move(p_src);
    tape->p_dst = std::move(p_dst);
    tape->r_edge = std::move(r_edge);
    tape->by_src = std::move(by_src);
    tape->by_dst = kernels::group_by(g.dst, n);
  }
  return out;
}

void backward(const LocGraph& g, const ModelParams& params, const ForwardTape& tape, const std::vector<Matrix>& d_disp,
              const std::vector<Matrix>& d_logits, ModelParams& grad) {
  const auto& cfg = params.config;
  const std::size_t n = g.n_nodes(), ne = g.n_edges(), L = cfg.latent_dim, K = cfg.K;
  require(d_disp.size() == K, "backward: expected one displacement gradient per step");
  require(cfg.n_classes == 0 || d_logits.size() == K, "backward: expected one logit gradient per step");
  require(tape.u.size() == K + 1, "backward: tape does not match the model");

  const auto w = phi_blocks(params.phi.w, L);
  std::array<Matrix, 6> dw;
  for (auto& m : dw) m.resize(L, L);

  Matrix du_next(n, L), df_next(ne, L);
  Matrix d_psrc(n, L), d_pdst(n, L), d_redge(ne, L);
  Matrix dpre, ds, dz, da, db;

  for (std::size_t step = K; step-- > 0;) {
    const Matrix& u_out = tape.u[step + 1];
    const Matrix& u_in = tape.u[step];
    const Matrix& f_out = tape.f[step + 1];
    const Matrix& f_in = tape.f[step];

    Matrix du = std::move(du_next);
    Matrix dd = d_disp[step];
    for (double& v : dd.values()) v *= cfg.length_scale_nm;
    kernels::linear_grad_params(dd, u_out, grad.disp_decoder.w, grad.disp_decoder.b);
    kernels::linear_grad_input(dd, params.disp_decoder.w, du, true);
    if (cfg.n_classes > 0) {
      kernels::linear_grad_params(d_logits[step], u_out, grad.class_decoder.w, grad.class_decoder.b);
      kernels::linear_grad_input(d_logits[step], params.class_decoder.w, du, true);
    }

    kernels::relu_grad(du, u_out);
    kernels::linear_grad_params(du, tape.s[step], grad.psi.w, grad.psi.b);
    kernels::linear_grad_input(du, params.psi.w, ds, false);

    dz = std::move(df_next);
    kernels::gather_add(ds, g.src, dz);
    kernels::relu_grad(dz, f_out);
    add_into(d_redge, dz);

    kernels::segment_sum(dz, tape.by_src, da);
    kernels::segment_sum(dz, tape.by_dst, db);
    add_into(d_psrc, da);
    add_into(d_pdst, db);

    du_next = Matrix(n, L);
    df_next = Matrix(ne, L);
    if (step > 0) {
      kernels::linear_grad_params(dz, f_in, dw[5], {});
      kernels::linear_grad_input(dz, w[5], df_next, true);
      kernels::linear_grad_params(da, u_in, dw[1], {});
      kernels::linear_grad_params(db, u_in, dw[3], {});
      kernels::linear_grad_input(da, w[1], du_next, true);
      kernels::linear_grad_input(db, w[3], du_next, true);
    }
  }

  Matrix dv(n, L), de(ne, L);
  kernels::linear_grad_params(d_redge, tape.e_lat, dw[4], grad.phi.b);
  kernels::linear_grad_input(d_redge, w[4], de, true);
  kernels::linear_grad_params(d_psrc, tape.v_lat, dw[0], {});
  kernels::linear_grad_input(d_psrc, w[0], dv, true);
  kernels::linear_grad_params(d_pdst, tape.v_lat, dw[2], {});
  kernels::linear_grad_input(d_pdst, w[2], dv, true);
  for (std::size_t blk = 0; blk < 6; ++blk) add_block_cols(grad.phi.w, blk * L, dw[blk]);

  kernels::linear_grad_params(dv, g.node_feats, grad.node_encoder.w, grad.node_encoder.b);
  kernels::linear_grad_params(de, tape.edge_input, grad.edge_encoder.w, grad.edge_encoder.b);
}

std::vector<Vec2> collapse(std::span<const Vec2> coords, const StepOutputs& out, std::size_t step) {
  if (step >= out.displacements.size())
    throw Error("collapse: step " + std::to_string(step) + " out of range [0, " +
                std::to_string(out.displacements.size()) + ")");
  const Matrix& d = out.displacements[step];
  require(d.rows() == coords.size(), "collapse: displacement count does not match point count");
  std::vector<Vec2> moved(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) moved[i] = {coords[i].x + d(i, 0), coords[i].y + d(i, 1)};
  return moved;
}

std::vector<Vec2> collapse(const PointCloud& cloud, const StepOutputs& out, std::size_t step) {
  const auto pos = cloud.positions();
  return collapse(pos, out, step);
}

nlohmann::json params_to_json(const ModelParams& p) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormat;
  j["config"] = p.config;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& t : const_cast<ModelParams&>(p).tensors())
    tensors[t.name] = {{"shape", t.shape}, {"data", std::vector<double>(t.data.begin(), t.data.end())}};
  j["tensors"] = std::move(tensors);
  return j;
}

ModelParams params_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("format_version"), "checkpoint: missing format_version");
  const int version = j.at("format_version").get<int>();
  require(version == kCheckpointFormat, "checkpoint: unsupported format_version " + std::to_string(version));
  ModelParams p(j.at("config").get<ModelConfig>());
  const auto& tensors = j.at("tensors");
  for (auto& t : p.tensors()) {
    require(tensors.contains(t.name), "checkpoint: missing tensor " + t.name);
    const auto& rec = tensors.at(t.name);
    const auto shape = rec.at("shape").get<std::vector<std::size_t>>();
    require(shape == t.shape, "checkpoint: tensor " + t.name + " has the wrong shape");
    const auto& data = rec.at("data");
    require(data.is_array() && data.size() == t.data.size(), "checkpoint: tensor " + t.name + " has the wrong size");
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = data[i].get<double>();
  }
  p.check_finite();
  return p;
}

void save_params(const std::filesystem::path& path, const ModelParams& p) {
  io::write_atomic(path, params_to_json(p).dump() + "\n");
}

ModelParams load_params(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint " + path.string() + ": " + e.what());
  }
  try {
    return params_from_json(j.contains("params") ? j.at("params") : j);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace miro
