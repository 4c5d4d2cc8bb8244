#include "mpipn/network.hpp"

#include <cmath>

#include "mpipn/error.hpp"
#include "mpipn/rng.hpp"

namespace mpipn::net {

namespace {

void push_list(std::vector<std::uint64_t>& d, const std::vector<std::size_t>& v) {
  d.push_back(v.size());
  for (auto x : v) d.push_back(x);
}

std::vector<std::size_t> pop_list(const std::vector<std::uint64_t>& d, std::size_t& pos) {
  if (pos >= d.size()) throw IoError("architecture descriptor truncated");
  const auto n = d[pos++];
  if (pos + n > d.size()) throw IoError("architecture descriptor truncated");
  std::vector<std::size_t> v(d.begin() + static_cast<std::ptrdiff_t>(pos),
                             d.begin() + static_cast<std::ptrdiff_t>(pos + n));
  pos += n;
  return v;
}

std::string layer_name(std::string_view prefix, std::size_t i) {
  return std::string(prefix) + ".l" + std::to_string(i);
}

class Builder {
 public:
  Builder(ModelParams& m, std::uint64_t seed) : m_(m), rng_(Rng::derive(seed, 10)) {}

  void constant(std::string name, Tensor value) { m_.tensors.push_back({std::move(name), std::move(value), false}); }

  void dense(const std::string& name, std::size_t in, std::size_t out, bool zero = false) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Tensor w({in, out}), b({1, out});
    if (!zero) {
      for (auto& v : w.storage()) v = rng_.uniform(-bound, bound);
      for (auto& v : b.storage()) v = rng_.uniform(-bound, bound);
    }
    m_.tensors.push_back({name + ".w", std::move(w), true});
    m_.tensors.push_back({name + ".b", std::move(b), true});
  }

  // Returns the output width.
  std::size_t chain(const std::string& prefix, std::size_t in, const std::vector<std::size_t>& widths) {
    for (std::size_t i = 0; i < widths.size(); ++i) {
      dense(layer_name(prefix, i), in, widths[i]);
      in = widths[i];
    }
    return in;
  }

  void tnet(const std::string& prefix, std::size_t m, const ArchConfig& a) {
    const std::size_t pooled = chain(prefix + ".point", m, a.tnet_point);
    const std::size_t hidden = chain(prefix + ".dense", pooled, a.tnet_dense);
    dense(prefix + ".out", hidden, m * m, true);
  }

 private:
  ModelParams& m_;
  Rng rng_;
};

Var linear(Var x, const Dense& layer) { return ad::add(ad::matmul(x, layer.w), ad::broadcast_rows(layer.b, x.rows())); }

std::vector<std::size_t> row_range(std::size_t begin, std::size_t end) {
  std::vector<std::size_t> rows(end - begin);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = begin + i;
  return rows;
}

std::string head_prefix(DomainTag tag, const ArchConfig& a) {
  const auto h = geometry::domain_index(tag);
  if (h >= a.heads) throw ConfigError("no criteria head for domain tag " + std::to_string(h));
  return "head" + std::to_string(h);
}

Var implicit_leaf(Tape& tape, const std::vector<double>& code, const ArchConfig& a) {
  if (code.size() != a.implicit_dim) {
    throw ShapeError("implicit code has " + std::to_string(code.size()) + " entries, expected " +
                     std::to_string(a.implicit_dim));
  }
  return tape.leaf(Tensor({1, code.size()}, code));
}

}  // namespace

std::vector<std::uint64_t> ArchConfig::descriptor() const {
  std::vector<std::uint64_t> d = {input_dim};
  push_list(d, tnet_point);
  push_list(d, tnet_dense);
  push_list(d, local_pre);
  push_list(d, local_post);
  push_list(d, global_mlp);
  d.push_back(implicit_dim);
  push_list(d, head_hidden);
  d.push_back(output_channels);
  d.push_back(heads);
  return d;
}

ArchConfig ArchConfig::from_descriptor(const std::vector<std::uint64_t>& d) {
  ArchConfig a;
  std::size_t pos = 0;
  auto scalar = [&] {
    if (pos >= d.size()) throw IoError("architecture descriptor truncated");
    return static_cast<std::size_t>(d[pos++]);
  };
  a.input_dim = scalar();
  a.tnet_point = pop_list(d, pos);
  a.tnet_dense = pop_list(d, pos);
  a.local_pre = pop_list(d, pos);
  a.local_post = pop_list(d, pos);
  a.global_mlp = pop_list(d, pos);
  a.implicit_dim = scalar();
  a.head_hidden = pop_list(d, pos);
  a.output_channels = scalar();
  a.heads = scalar();
  if (pos != d.size()) throw IoError("architecture descriptor has trailing entries");
  a.validate();
  return a;
}

void ArchConfig::validate() const {
  auto nonempty = [](const std::vector<std::size_t>& v, const char* what) {
    if (v.empty()) throw ConfigError(std::string("architecture: ") + what + " needs at least one layer");
    for (auto w : v) {
      if (w == 0) throw ConfigError(std::string("architecture: zero width in ") + what);
    }
  };
  nonempty(tnet_point, "tnet_point");
  nonempty(tnet_dense, "tnet_dense");
  nonempty(local_pre, "local_pre");
  nonempty(local_post, "local_post");
  nonempty(global_mlp, "global_mlp");
  nonempty(head_hidden, "head_hidden");
  if (input_dim == 0 || output_channels == 0 || heads == 0) throw ConfigError("architecture: zero-sized contract");
}

std::size_t ModelParams::index(std::string_view name) const {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name == name) return i;
  }
  throw ConfigError("model has no tensor '" + std::string(name) + "'");
}

std::size_t ModelParams::trainable_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.trainable ? t.value.size() : 0;
  return n;
}

ModelParams init_params(std::uint64_t seed, const ArchConfig& arch) {
  arch.validate();
  ModelParams m;
  m.arch = arch;
  Builder b(m, seed);
  b.constant("norm.center", Tensor({1, arch.input_dim}, 0.0));
  b.constant("norm.scale", Tensor({1, arch.input_dim}, 1.0));
  b.constant("implicit.mean", Tensor({1, arch.implicit_dim}, 0.0));
  b.constant("implicit.std", Tensor({1, arch.implicit_dim}, 1.0));

  b.tnet("tnet_in", arch.input_dim, arch);
  const std::size_t pre = b.chain("local_pre", arch.input_dim, arch.local_pre);
  b.tnet("tnet_feat", pre, arch);
  const std::size_t local = b.chain("local_post", pre, arch.local_post);
  b.chain("global", local, arch.global_mlp);
  for (std::size_t h = 0; h < arch.heads; ++h) {
    auto widths = arch.head_hidden;
    widths.push_back(arch.output_channels);
    b.chain("head" + std::to_string(h), arch.criteria_width(), widths);
  }
  return m;
}

void set_input_normalization(ModelParams& model, const geometry::Rect& outer, double f_min, double f_max) {
  if (model.arch.input_dim != 3) throw ConfigError("input normalization expects (x, y, f) inputs");
  auto half = [](double lo, double hi) { return hi > lo ? 0.5 * (hi - lo) : 1.0; };
  model.at("norm.center") = Tensor({1, 3}, {0.5 * (outer.x0 + outer.x1), 0.5 * (outer.y0 + outer.y1), 0.5 * (f_min + f_max)});
  model.at("norm.scale") = Tensor({1, 3}, {half(outer.x0, outer.x1), half(outer.y0, outer.y1), half(f_min, f_max)});
}

void set_implicit_stats(ModelParams& model, const std::vector<double>& mean, const std::vector<double>& stddev) {
  const std::size_t n = model.arch.implicit_dim;
  if (mean.size() != n || stddev.size() != n) throw ShapeError("implicit statistics must have one entry per quantity");
  for (double s : stddev) {
    if (!(s > 0.0)) throw NumericError("implicit statistics: standard deviation must be positive");
  }
  model.at("implicit.mean") = Tensor({1, n}, mean);
  model.at("implicit.std") = Tensor({1, n}, stddev);
}

Bound bind(Tape& tape, const ModelParams& model, bool requires_grad) {
  Bound b;
  b.model = &model;
  b.vars.reserve(model.tensors.size());
  for (const auto& t : model.tensors) b.vars.push_back(tape.leaf(t.value, requires_grad && t.trainable));
  return b;
}

std::vector<Dense> layers(const Bound& p, std::string_view prefix) {
  std::vector<Dense> out;
  for (std::size_t i = 0;; ++i) {
    const std::string name = layer_name(prefix, i);
    bool found = false;
    for (const auto& t : p.model->tensors) found = found || t.name == name + ".w";
    if (!found) break;
    out.push_back({p[name + ".w"], p[name + ".b"]});
  }
  if (out.empty()) throw ConfigError("model has no layers under '" + std::string(prefix) + "'");
  return out;
}

Tensor stack_quantities(const Tensor& coords, const Tensor& quantity) {
  if (coords.empty() && quantity.empty()) return {};
  if (coords.rows() != quantity.rows()) {
    throw ShapeError("stack_quantities: " + coords.shape_string() + " coordinates vs " + quantity.shape_string() +
                     " quantities");
  }
  const std::size_t n = coords.rows(), di = coords.cols(), dq = quantity.cols();
  Tensor out({n, di + dq});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < di; ++c) out(r, c) = coords(r, c);
    for (std::size_t c = 0; c < dq; ++c) out(r, di + c) = quantity(r, c);
  }
  return out;
}

Var stack_quantities(Var coords, Var quantity) {
  if (coords.rows() != quantity.rows()) throw ShapeError("stack_quantities: point counts differ");
  return ad::concat_cols(coords, quantity);
}

Var matrix_mlp(Var input, const std::vector<Dense>& mlp, bool linear_last) {
  Var h = input;
  for (std::size_t i = 0; i < mlp.size(); ++i) {
    if (h.cols() != mlp[i].w.rows()) {
      throw ShapeError("matrix_mlp: layer " + std::to_string(i) + " expects width " + std::to_string(mlp[i].w.rows()) +
                       ", got " + std::to_string(h.cols()));
    }
    h = linear(h, mlp[i]);
    if (!(linear_last && i + 1 == mlp.size())) h = ad::mish(h);
  }
  return h;
}

Var tnet_matrix(Var input, const Bound& p, std::string_view prefix) {
  const std::size_t m = input.cols();
  const std::string pre(prefix);
  const Var out_w = p[pre + ".out.w"];
  if (out_w.cols() != m * m) {
    throw ShapeError("feature_transform: " + pre + " produces " + std::to_string(out_w.cols()) +
                     " entries, input width " + std::to_string(m) + " needs " + std::to_string(m * m));
  }
  const Var pooled = ad::max_pool_rows(matrix_mlp(input, layers(p, pre + ".point")));
  const Var hidden = matrix_mlp(pooled, layers(p, pre + ".dense"));
  const Var flat = linear(hidden, {out_w, p[pre + ".out.b"]});
  Tape& tape = *input.tape;
  return ad::add(ad::reshape_blocks(flat, m, m), tape.leaf(Tensor::identity(m)));
}

Var feature_transform(Var input, const Bound& p, std::string_view prefix) {
  return ad::matmul(input, tnet_matrix(input, p, prefix));
}

Var local_extractor(Var stacked, const Bound& p) {
  const ArchConfig& a = p.model->arch;
  if (stacked.cols() != a.input_dim) {
    throw ShapeError("local_extractor: stacked width " + std::to_string(stacked.cols()) + ", expected " +
                     std::to_string(a.input_dim));
  }
  Tape& tape = *stacked.tape;
  const std::size_t n = stacked.rows();
  Tensor inv = p.model->at("norm.scale"), shift = p.model->at("norm.center");
  for (std::size_t c = 0; c < inv.size(); ++c) {
    inv[c] = 1.0 / inv[c];
    shift[c] = -shift[c] * inv[c];
  }
  const Var normalized = ad::add(ad::mul(stacked, ad::broadcast_rows(tape.leaf(inv), n)),
                                 ad::broadcast_rows(tape.leaf(shift), n));
  Var h = feature_transform(normalized, p, "tnet_in");
  h = matrix_mlp(h, layers(p, "local_pre"));
  h = feature_transform(h, p, "tnet_feat");
  return matrix_mlp(h, layers(p, "local_post"));
}

Var global_feature(Var local, const Bound& p) {
  if (local.cols() != p.model->arch.local_width()) throw ShapeError("global_extractor: local width mismatch");
  return ad::max_pool_rows(matrix_mlp(local, layers(p, "global")));
}

Var global_extractor(Var local, const Bound& p) {
  return ad::broadcast_rows(global_feature(local, p), local.rows());
}

std::vector<double> encode_implicit(const std::vector<double>& raw, const std::vector<double>& mean,
                                    const std::vector<double>& stddev) {
  if (raw.size() != mean.size() || raw.size() != stddev.size()) {
    throw ShapeError("encode_implicit: " + std::to_string(raw.size()) + " values vs " + std::to_string(mean.size()) +
                     " statistics");
  }
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!(stddev[i] > 0.0)) {
      throw NumericError("encode_implicit: zero spread for quantity " + std::to_string(i) + " (degenerate training set)");
    }
    out[i] = (raw[i] - mean[i]) / stddev[i];
  }
  return out;
}

Var criteria_sequence(Var implicit_row, Var local, Var global_row) {
  const std::size_t n = local.rows();
  const Var parts[] = {ad::broadcast_rows(implicit_row, n), local, ad::broadcast_rows(global_row, n)};
  return ad::concat_cols(parts);
}

Var criteria_solver(Var criteria, DomainTag tag, const Bound& p) {
  const ArchConfig& a = p.model->arch;
  if (criteria.cols() != a.criteria_width()) {
    throw ShapeError("criteria_solver: width " + std::to_string(criteria.cols()) + ", expected " +
                     std::to_string(a.criteria_width()));
  }
  return matrix_mlp(criteria, layers(p, head_prefix(tag, a)), true);
}

Var forward_domain(Var stacked, const std::vector<double>& implicit_code, DomainTag tag, const Bound& p) {
  const ArchConfig& a = p.model->arch;
  const std::string prefix = head_prefix(tag, a);
  Tape& tape = *stacked.tape;
  const Var local = local_extractor(stacked, p);
  const Var global = global_feature(local, p);
  const Var code = implicit_leaf(tape, implicit_code, a);

  const auto head = layers(p, prefix);
  const Dense& first = head.front();
  const std::size_t np = a.implicit_dim, nl = a.local_width();
  const Var w_p = ad::gather_rows(first.w, row_range(0, np));
  const Var w_l = ad::gather_rows(first.w, row_range(np, np + nl));
  const Var w_g = ad::gather_rows(first.w, row_range(np + nl, a.criteria_width()));
  const Var shared = ad::add(ad::add(ad::matmul(code, w_p), ad::matmul(global, w_g)), first.b);
  Var h = ad::mish(ad::add(ad::matmul(local, w_l), ad::broadcast_rows(shared, local.rows())));
  const std::vector<Dense> rest(head.begin() + 1, head.end());
  return matrix_mlp(h, rest, true);
}

Var forward_domain_literal(Var stacked, const std::vector<double>& implicit_code, DomainTag tag, const Bound& p) {
  const Var local = local_extractor(stacked, p);
  const Var global = global_feature(local, p);
  const Var code = implicit_leaf(*stacked.tape, implicit_code, p.model->arch);
  return criteria_solver(criteria_sequence(code, local, global), tag, p);
}

std::array<Tensor, 3> forward(const ModelParams& model, const geometry::PointCloudSet& cloud, double f_hz,
                              const std::vector<double>& implicit_raw) {
  std::vector<double> mean(model.at("implicit.mean").data().begin(), model.at("implicit.mean").data().end());
  std::vector<double> sd(model.at("implicit.std").data().begin(), model.at("implicit.std").data().end());
  const auto code = encode_implicit(implicit_raw, mean, sd);
  std::array<Tensor, 3> out;
  for (auto tag : geometry::kAllDomains) {
    const auto pts = cloud.points(tag);
    if (pts.empty()) continue;
    Tensor stacked({pts.size(), 3});
    for (std::size_t i = 0; i < pts.size(); ++i) {
      stacked(i, 0) = pts[i].x;
      stacked(i, 1) = pts[i].y;
      stacked(i, 2) = f_hz;
    }
    Tape tape;
    const Bound p = bind(tape, model, false);
    out[geometry::domain_index(tag)] = forward_domain(tape.leaf(stacked), code, tag, p).value();
  }
  return out;
}

}  // namespace mpipn::net
