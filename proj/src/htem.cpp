#include "tsp/htem.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "tsp/adam.hpp"
#include "tsp/log.hpp"
#include "tsp/rng.hpp"

namespace tsp {
namespace {

constexpr double kDivFloor = 1e-6;

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

// y = W x, W row-major rows x cols.
void matvec(const double* w, const double* x, double* y, std::size_t rows,
            std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] = acc;
  }
}

void matvec_add(const double* w, const double* x, double* y, std::size_t rows,
                std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* wr = w + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
    y[r] += acc;
  }
}

// dx += W^T dy.
void matvec_t_add(const double* w, const double* dy, double* dx,
                  std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) dx[c] += wr[c] * g;
  }
}

// dW += dy x^T.
void outer_add(double* dw, const double* dy, const double* x, std::size_t rows,
               std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dy[r];
    if (g == 0.0) continue;
    double* wr = dw + r * cols;
    for (std::size_t c = 0; c < cols; ++c) wr[c] += g * x[c];
  }
}

// Sign-preserving divisor with a floor on the magnitude; zero maps to the
// positive floor.
double safe_divisor(double u) {
  if (u >= 0.0) return std::max(u, kDivFloor);
  return std::min(u, -kDivFloor);
}

struct Edge {
  std::uint32_t dst = 0;
  std::uint32_t src = 0;
  std::uint32_t rel = 0;  // augmented relation id
  std::uint8_t dir = 0;   // 0 forward, 1 inverse, 2 self-loop
};

struct EncoderCache {
  std::size_t n = 0;
  std::vector<Edge> edges;
  // ent[l]: n x d, rel[l]: n_aug x d for l in 0..layers.
  std::vector<std::vector<double>> ent;
  std::vector<std::vector<double>> rel;
  // Per-layer per-direction aggregated incoming messages, n x d.
  std::vector<std::array<std::vector<double>, 3>> agg;
};

std::unordered_map<EntityId, std::uint32_t> local_index(
    const std::vector<EntityId>& entities) {
  std::unordered_map<EntityId, std::uint32_t> idx;
  idx.reserve(entities.size() * 2);
  for (std::size_t i = 0; i < entities.size(); ++i)
    idx.emplace(entities[i], static_cast<std::uint32_t>(i));
  return idx;
}

void encoder_run(const HtemModel& model, const std::vector<EntityId>& entities,
                 const std::vector<Triple>& support, EncoderCache* cache) {
  const std::size_t n = entities.size();
  const std::size_t d = model.dim();
  const std::size_t n_rel = model.n_relations();
  const std::size_t n_aug = model.n_aug_relations();
  const std::size_t layers = model.config().layers;

  cache->n = n;
  cache->edges.clear();
  cache->edges.reserve(support.size() * 2 + n);
  const auto idx = local_index(entities);
  for (const Triple& t : support) {
    auto ih = idx.find(t.head);
    auto it = idx.find(t.tail);
    if (ih == idx.end() || it == idx.end())
      fail("encoder support triple mentions an entity outside the subgraph");
    cache->edges.push_back({ih->second, it->second, t.rel, 0});
    cache->edges.push_back(
        {it->second, ih->second, static_cast<std::uint32_t>(n_rel + t.rel), 1});
  }
  for (std::uint32_t e = 0; e < n; ++e)
    cache->edges.push_back({e, e, static_cast<std::uint32_t>(2 * n_rel), 2});

  cache->ent.assign(layers + 1, std::vector<double>(n * d, 0.0));
  cache->rel.assign(layers + 1, std::vector<double>(n_aug * d, 0.0));
  cache->agg.assign(layers, {});

  const double* embed = model.ent_embed();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = embed + static_cast<std::size_t>(entities[i]) * d;
    std::copy(row, row + d, cache->ent[0].begin() + i * d);
  }
  const std::size_t n_basis = model.config().bases;
  const double* basis = model.basis();
  const double* mix = model.basis_mix();
  for (std::size_t ar = 0; ar < n_aug; ++ar) {
    double* out = cache->rel[0].data() + ar * d;
    for (std::size_t b = 0; b < n_basis; ++b) {
      const double a = mix[ar * n_basis + b];
      const double* bv = basis + b * d;
      for (std::size_t k = 0; k < d; ++k) out[k] += a * bv[k];
    }
  }

  std::vector<double> pre(n * d);
  for (std::size_t l = 0; l < layers; ++l) {
    for (auto& a : cache->agg[l]) a.assign(n * d, 0.0);
    const auto& ent = cache->ent[l];
    const auto& rel = cache->rel[l];
    for (const Edge& e : cache->edges) {
      double* acc = cache->agg[l][e.dir].data() + e.dst * d;
      const double* src = ent.data() + e.src * d;
      const double* rv = rel.data() + e.rel * d;
      for (std::size_t k = 0; k < d; ++k) acc[k] += src[k] - rv[k];
    }
    std::fill(pre.begin(), pre.end(), 0.0);
    for (int dir = 0; dir < 3; ++dir) {
      const double* w = model.w_dir(l, dir);
      for (std::size_t e = 0; e < n; ++e)
        matvec_add(w, cache->agg[l][dir].data() + e * d, pre.data() + e * d, d,
                   d);
    }
    auto& out = cache->ent[l + 1];
    for (std::size_t i = 0; i < n * d; ++i) out[i] = std::tanh(pre[i]);
    const double* wr = model.w_rel(l);
    for (std::size_t ar = 0; ar < n_aug; ++ar)
      matvec(wr, rel.data() + ar * d, cache->rel[l + 1].data() + ar * d, d, d);
  }
}

// Propagates gradients at the encoder outputs down to the model parameters.
// dent_n (n x d) and drel_n (n_aug x d) are consumed.
void encoder_backward(const HtemModel& model,
                      const std::vector<EntityId>& entities,
                      const EncoderCache& cache, std::vector<double>* dent_n,
                      std::vector<double>* drel_n, std::vector<double>* grads) {
  const std::size_t n = cache.n;
  const std::size_t d = model.dim();
  const std::size_t n_aug = model.n_aug_relations();
  const std::size_t layers = model.config().layers;

  std::vector<double> dent = std::move(*dent_n);
  std::vector<double> drel = std::move(*drel_n);
  std::vector<double> dpre(n * d);
  std::array<std::vector<double>, 3> dagg;

  for (std::size_t l = layers; l-- > 0;) {
    const auto& out = cache.ent[l + 1];
    for (std::size_t i = 0; i < n * d; ++i)
      dpre[i] = dent[i] * (1.0 - out[i] * out[i]);

    for (int dir = 0; dir < 3; ++dir) {
      dagg[dir].assign(n * d, 0.0);
      const double* w = model.w_dir(l, dir);
      double* gw = grads->data() + model.offset_of(std::string("w_") +
                                                   (dir == 0   ? "out"
                                                    : dir == 1 ? "in"
                                                               : "self") +
                                                   std::to_string(l));
      for (std::size_t e = 0; e < n; ++e) {
        matvec_t_add(w, dpre.data() + e * d, dagg[dir].data() + e * d, d, d);
        outer_add(gw, dpre.data() + e * d, cache.agg[l][dir].data() + e * d, d,
                  d);
      }
    }

    std::vector<double> dent_prev(n * d, 0.0);
    std::vector<double> drel_prev(n_aug * d, 0.0);
    for (const Edge& e : cache.edges) {
      const double* g = dagg[e.dir].data() + e.dst * d;
      double* ds = dent_prev.data() + e.src * d;
      double* dr = drel_prev.data() + e.rel * d;
      for (std::size_t k = 0; k < d; ++k) {
        ds[k] += g[k];
        dr[k] -= g[k];
      }
    }

    const double* wr = model.w_rel(l);
    double* gwr = grads->data() +
                  model.offset_of(std::string("w_rel") + std::to_string(l));
    for (std::size_t ar = 0; ar < n_aug; ++ar) {
      matvec_t_add(wr, drel.data() + ar * d, drel_prev.data() + ar * d, d, d);
      outer_add(gwr, drel.data() + ar * d, cache.rel[l].data() + ar * d, d, d);
    }

    dent = std::move(dent_prev);
    drel = std::move(drel_prev);
  }

  double* g_embed = grads->data() + model.offset_of("ent_embed");
  for (std::size_t i = 0; i < n; ++i) {
    double* row = g_embed + static_cast<std::size_t>(entities[i]) * d;
    const double* g = dent.data() + i * d;
    for (std::size_t k = 0; k < d; ++k) row[k] += g[k];
  }
  const std::size_t n_basis = model.config().bases;
  const double* basis = model.basis();
  const double* mix = model.basis_mix();
  double* g_basis = grads->data() + model.offset_of("basis");
  double* g_mix = grads->data() + model.offset_of("basis_mix");
  for (std::size_t ar = 0; ar < n_aug; ++ar) {
    const double* g = drel.data() + ar * d;
    for (std::size_t b = 0; b < n_basis; ++b) {
      const double* bv = basis + b * d;
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += g[k] * bv[k];
      g_mix[ar * n_basis + b] += dot;
      const double a = mix[ar * n_basis + b];
      double* gb = g_basis + b * d;
      for (std::size_t k = 0; k < d; ++k) gb[k] += a * g[k];
    }
  }
}

// Shared decoder state over one encoded subgraph: sliced entity vectors for
// the relation scorer, attention keys and queries, and the per-relation
// modulus ratio rows for the modulus-phase family.
struct DecoderState {
  std::size_t n = 0;
  std::vector<double> z;        // n x ew
  std::vector<double> keys;     // n x d
  std::vector<double> queries;  // n x d
  std::vector<double> mm;       // n_rel x q (modulus-phase family only)
};

void decoder_setup(const HtemModel& model, const EncoderCache& enc,
                   DecoderState* st) {
  const std::size_t n = enc.n;
  const std::size_t d = model.dim();
  const std::size_t ew = model.kge_entity_width();
  const auto& ent_n = enc.ent.back();
  st->n = n;
  st->z.assign(n * ew, 0.0);
  st->keys.assign(n * d, 0.0);
  st->queries.assign(n * d, 0.0);
  for (std::size_t e = 0; e < n; ++e) {
    matvec(model.w_elem(), ent_n.data() + e * d, st->z.data() + e * ew, ew, d);
    matvec(model.w_key(), ent_n.data() + e * d, st->keys.data() + e * d, d, d);
    matvec(model.w_query(), ent_n.data() + e * d, st->queries.data() + e * d, d,
           d);
  }
  if (model.config().kind == KgeKind::kHake) {
    const std::size_t q = d / 3;
    const std::size_t n_rel = model.n_relations();
    const auto& rel_n = enc.rel.back();
    st->mm.assign(n_rel * q, 0.0);
    for (std::size_t r = 0; r < n_rel; ++r) {
      const double* row = rel_n.data() + r * d;
      for (std::size_t j = 0; j < q; ++j) {
        const double rm = row[q + j];
        const double rb = row[2 * q + j];
        st->mm[r * q + j] = (rm + rb) / std::max(1.0 - rb, kDivFloor);
      }
    }
  }
}

// Softmax row of attention logits for one head over all subgraph entities.
std::vector<double> attention_row(const DecoderState& st, std::size_t h,
                                  std::size_t d) {
  const std::size_t n = st.n;
  std::vector<double> row(n);
  const double* qh = st.queries.data() + h * d;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  double mx = -1e300;
  for (std::size_t e = 0; e < n; ++e) {
    const double* ke = st.keys.data() + e * d;
    double dot = 0.0;
    for (std::size_t k = 0; k < d; ++k) dot += qh[k] * ke[k];
    row[e] = dot * scale;
    mx = std::max(mx, row[e]);
  }
  double denom = 0.0;
  for (std::size_t e = 0; e < n; ++e) {
    row[e] = std::exp(row[e] - mx);
    denom += row[e];
  }
  for (std::size_t e = 0; e < n; ++e) row[e] /= denom;
  return row;
}

// Relation attention scores s_i for a pair given sliced entity vectors.
// `z` holds all sliced entity rows, `mm` the modulus ratio rows (unused for
// the paired-projection family).
void relation_scores(const HtemModel& model, const double* z, const double* mm,
                     const std::vector<double>& rel_n, std::size_t hl,
                     std::size_t tl, double* s) {
  const std::size_t d = model.dim();
  const std::size_t ew = model.kge_entity_width();
  const std::size_t n_rel = model.n_relations();
  const double* zh = z + hl * ew;
  const double* zt = z + tl * ew;
  if (model.config().kind == KgeKind::kHake) {
    const std::size_t q = d / 3;
    for (std::size_t r = 0; r < n_rel; ++r) {
      const double* rp = rel_n.data() + r * d;
      const double* mmr = mm + r * q;
      double acc = 0.0;
      for (std::size_t j = 0; j < q; ++j) {
        acc += (zt[j] / safe_divisor(zh[j])) * mmr[j];
        acc += (zt[q + j] - zh[q + j]) * rp[j];
      }
      s[r] = acc;
    }
  } else {
    const std::size_t half = d / 2;
    for (std::size_t r = 0; r < n_rel; ++r) {
      const double* row = rel_n.data() + r * d;
      double acc = 0.0;
      for (std::size_t j = 0; j < half; ++j)
        acc += zh[j] * row[j] - zt[j] * row[half + j];
      s[r] = acc;
    }
  }
}

struct MlpCache {
  std::vector<std::vector<double>> inputs;  // input to each layer
  std::vector<std::vector<double>> pre;     // pre-activation of each layer
  std::vector<std::vector<char>> keep;      // dropout keep masks
  bool dropped = false;                     // whether masks were applied
};

// Forward through the decoder stack; returns the sigmoid output. When
// training, dropout masks are drawn from rng and recorded in the cache.
double mlp_forward(const HtemModel& model, const std::vector<double>& x0,
                   MlpCache* cache, std::mt19937_64* rng, bool training) {
  const std::size_t n_layers = model.config().mlp_layers;
  const double slope = model.config().leaky_slope;
  const double drop = model.config().dropout;
  cache->inputs.assign(n_layers, {});
  cache->pre.assign(n_layers, {});
  cache->keep.assign(n_layers, {});
  cache->dropped = training && drop > 0.0;
  std::vector<double> x = x0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t rows = model.mlp_out(l);
    const std::size_t cols = model.mlp_in(l);
    cache->inputs[l] = x;
    std::vector<double> u(rows);
    matvec(model.mlp(l), x.data(), u.data(), rows, cols);
    cache->pre[l] = u;
    if (l + 1 == n_layers) {
      x = u;
      break;
    }
    std::vector<double> v(rows);
    for (std::size_t i = 0; i < rows; ++i)
      v[i] = u[i] > 0.0 ? u[i] : slope * u[i];
    cache->keep[l].assign(rows, 1);
    if (cache->dropped) {
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      const double inv = 1.0 / (1.0 - drop);
      for (std::size_t i = 0; i < rows; ++i) {
        if (unif(*rng) < drop) {
          cache->keep[l][i] = 0;
          v[i] = 0.0;
        } else {
          v[i] *= inv;
        }
      }
    }
    x = std::move(v);
  }
  return stable_sigmoid(x[0]);
}

// Backward through the decoder stack; `dz` is dL/d(final linear output).
// Returns dL/dx0.
std::vector<double> mlp_backward(const HtemModel& model, const MlpCache& cache,
                                 double dz, std::vector<double>* grads) {
  const std::size_t n_layers = model.config().mlp_layers;
  const double slope = model.config().leaky_slope;
  const double drop = model.config().dropout;
  std::vector<double> dy{dz};
  for (std::size_t l = n_layers; l-- > 0;) {
    const std::size_t rows = model.mlp_out(l);
    const std::size_t cols = model.mlp_in(l);
    std::vector<double> du(rows);
    if (l + 1 == n_layers) {
      du[0] = dy[0];
    } else {
      const double inv = cache.dropped ? 1.0 / (1.0 - drop) : 1.0;
      for (std::size_t i = 0; i < rows; ++i) {
        if (cache.dropped && !cache.keep[l][i]) {
          du[i] = 0.0;
          continue;
        }
        const double g = dy[i] * inv;
        du[i] = cache.pre[l][i] > 0.0 ? g : slope * g;
      }
    }
    double* gw = grads->data() +
                 model.offset_of(std::string("mlp") + std::to_string(l));
    outer_add(gw, du.data(), cache.inputs[l].data(), rows, cols);
    std::vector<double> dx(cols, 0.0);
    matvec_t_add(model.mlp(l), du.data(), dx.data(), rows, cols);
    dy = std::move(dx);
  }
  return dy;
}

// Gradient of the raw truth-value score with respect to its three inputs.
void parts_grad(KgeKind kind, const double* eh, const double* rel,
                const double* et, std::size_t ew, std::size_t d, double lambda,
                double df, double* geh, double* grel, double* get) {
  if (kind == KgeKind::kHake) {
    const std::size_t q = ew / 2;
    double norm2 = 0.0;
    std::vector<double> v(q);
    for (std::size_t j = 0; j < q; ++j) {
      v[j] = eh[j] * rel[q + j] - et[j];
      norm2 += v[j] * v[j];
    }
    const double norm = std::sqrt(norm2);
    for (std::size_t j = 0; j < q; ++j) {
      if (norm > 0.0) {
        const double dv = df * (-v[j] / norm);
        geh[j] += dv * rel[q + j];
        grel[q + j] += dv * eh[j];
        get[j] -= dv;
      }
      const double w = eh[q + j] + rel[j] - et[q + j];
      const double sw = std::sin(0.5 * w);
      const double sgn = sw > 0.0 ? 1.0 : (sw < 0.0 ? -1.0 : 0.0);
      const double dw = df * (-lambda * sgn * std::cos(0.5 * w) * 0.5);
      geh[q + j] += dw;
      grel[j] += dw;
      get[q + j] -= dw;
    }
  } else {
    const std::size_t half = ew;
    (void)d;
    for (std::size_t j = 0; j < half; ++j) {
      const double u = eh[j] * rel[j] - et[j] * rel[half + j];
      const double sgn = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
      const double du = df * (-sgn);
      geh[j] += du * rel[j];
      grel[j] += du * eh[j];
      get[j] -= du * rel[half + j];
      grel[half + j] -= du * et[j];
    }
  }
}

std::size_t find_local(const std::vector<EntityId>& entities, EntityId e) {
  auto it = std::lower_bound(entities.begin(), entities.end(), e);
  if (it == entities.end() || *it != e)
    fail("entity ", e, " does not belong to this subgraph");
  return static_cast<std::size_t>(it - entities.begin());
}

}  // namespace

HtemModel::HtemModel(const HtemConfig& config, std::size_t n_entities,
                     std::size_t n_base_relations)
    : config_(config), n_entities_(n_entities), n_relations_(n_base_relations) {
  const std::size_t d = config_.dim;
  if (config_.kind == KgeKind::kHake && d % 3 != 0)
    fail("encoder width must be divisible by 3 for the modulus-phase family");
  if (config_.kind == KgeKind::kPairRE && d % 2 != 0)
    fail("encoder width must be even for the paired-projection family");
  if (config_.bases == 0 || config_.mlp_layers == 0 || d == 0)
    fail("degenerate pair-likelihood model configuration");
  if (n_entities_ == 0 || n_relations_ == 0)
    fail("pair-likelihood model needs a non-empty vocabulary");

  auto add = [&](const std::string& name, std::size_t rows, std::size_t cols) {
    Tensor t;
    t.name = name;
    t.rows = rows;
    t.cols = cols;
    t.offset = params_.size();
    params_.resize(params_.size() + rows * cols, 0.0);
    tensors_.push_back(t);
  };
  add("ent_embed", n_entities_, d);
  add("basis", config_.bases, d);
  add("basis_mix", n_aug_relations(), config_.bases);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    add(concat("w_out", l), d, d);
    add(concat("w_in", l), d, d);
    add(concat("w_self", l), d, d);
    add(concat("w_rel", l), d, d);
  }
  add("w_query", d, d);
  add("w_key", d, d);
  add("w_elem", kge_entity_width(), d);
  for (std::size_t l = 0; l < config_.mlp_layers; ++l)
    add(concat("mlp", l), mlp_out(l), mlp_in(l));
}

std::size_t HtemModel::kge_entity_width() const {
  return config_.kind == KgeKind::kHake ? 2 * (config_.dim / 3)
                                        : config_.dim / 2;
}

std::size_t HtemModel::decoder_input_width() const {
  std::size_t w = 2 * config_.dim;
  if (config_.entity_attn) w += 1;
  if (config_.relation_attn) w += n_relations_;
  return w;
}

std::size_t HtemModel::mlp_in(std::size_t layer) const {
  return layer == 0 ? decoder_input_width() : config_.mlp_hidden;
}

std::size_t HtemModel::mlp_out(std::size_t layer) const {
  return layer + 1 == config_.mlp_layers ? 1 : config_.mlp_hidden;
}

double* HtemModel::at(const std::string& name) {
  return params_.data() + offset_of(name);
}

const double* HtemModel::at(const std::string& name) const {
  return params_.data() + offset_of(name);
}

std::size_t HtemModel::offset_of(const std::string& name) const {
  for (const Tensor& t : tensors_)
    if (t.name == name) return t.offset;
  fail("unknown model tensor ", name);
}

double* HtemModel::w_dir(std::size_t layer, int dir) {
  const char* base = dir == 0 ? "w_out" : dir == 1 ? "w_in" : "w_self";
  return at(concat(base, layer));
}

double* HtemModel::w_rel(std::size_t layer) {
  return at(concat("w_rel", layer));
}

double* HtemModel::mlp(std::size_t layer) { return at(concat("mlp", layer)); }

const double* HtemModel::w_dir(std::size_t layer, int dir) const {
  const char* base = dir == 0 ? "w_out" : dir == 1 ? "w_in" : "w_self";
  return at(concat(base, layer));
}

const double* HtemModel::w_rel(std::size_t layer) const {
  return at(concat("w_rel", layer));
}

const double* HtemModel::mlp(std::size_t layer) const {
  return at(concat("mlp", layer));
}

void HtemModel::init_random(std::mt19937_64& rng) {
  for (const Tensor& t : tensors_) {
    double bound;
    if (t.name == "ent_embed" || t.name == "basis") {
      bound = std::sqrt(3.0 / static_cast<double>(t.cols));
    } else if (t.name == "basis_mix") {
      bound = std::sqrt(3.0 / static_cast<double>(t.cols));
    } else {
      bound = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
    }
    std::uniform_real_distribution<double> unif(-bound, bound);
    for (std::size_t i = 0; i < t.rows * t.cols; ++i)
      params_[t.offset + i] = unif(rng);
  }
}

bool operator==(const HtemModel& a, const HtemModel& b) {
  return a.config_.kind == b.config_.kind && a.config_.dim == b.config_.dim &&
         a.config_.bases == b.config_.bases &&
         a.config_.layers == b.config_.layers &&
         a.config_.mlp_layers == b.config_.mlp_layers &&
         a.config_.mlp_hidden == b.config_.mlp_hidden &&
         a.config_.entity_attn == b.config_.entity_attn &&
         a.config_.relation_attn == b.config_.relation_attn &&
         a.n_entities_ == b.n_entities_ && a.n_relations_ == b.n_relations_ &&
         a.params_ == b.params_;
}

SubgraphEpisode make_episode(const std::vector<EntityId>& entities,
                             const std::vector<Triple>& triples,
                             double query_fraction, double neg_ratio,
                             std::mt19937_64& rng) {
  SubgraphEpisode ep;
  ep.entities = entities;
  std::vector<Triple> shuffled = triples;
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const std::size_t n_query = static_cast<std::size_t>(
      std::llround(query_fraction * static_cast<double>(shuffled.size())));
  ep.query.assign(shuffled.begin(), shuffled.begin() + n_query);
  ep.support.assign(shuffled.begin() + n_query, shuffled.end());

  std::unordered_set<std::uint64_t> connected;
  connected.reserve(triples.size() * 2);
  for (const Triple& t : triples) connected.insert(pack_pair(t.head, t.tail));

  const std::size_t want = static_cast<std::size_t>(
      std::llround(neg_ratio * static_cast<double>(n_query)));
  std::uniform_int_distribution<std::size_t> pick(0, entities.size() - 1);
  std::size_t attempts = 0;
  const std::size_t max_attempts = 100 * (want + 1);
  while (ep.negatives.size() < want && attempts < max_attempts) {
    ++attempts;
    const EntityId h = entities[pick(rng)];
    const EntityId t = entities[pick(rng)];
    if (h == t) continue;
    if (connected.count(pack_pair(h, t))) continue;
    ep.negatives.emplace_back(h, t);
  }
  if (ep.negatives.size() < want)
    log_warn("episode negative sampling saturated at ", ep.negatives.size(),
             " of ", want);
  return ep;
}

EncoderOutput compgcn_forward(const HtemModel& model,
                              const std::vector<EntityId>& entities,
                              const std::vector<Triple>& support) {
  EncoderCache cache;
  encoder_run(model, entities, support, &cache);
  EncoderOutput out;
  out.entity_reps = cache.ent.back();
  out.relation_reps = cache.rel.back();
  return out;
}

HtemLoss htem_loss(const HtemModel& model, const SubgraphEpisode& episode,
                   std::vector<double>* grads, std::mt19937_64* rng,
                   bool training) {
  if (grads && grads->size() != model.params().size())
    fail("gradient buffer size mismatch");
  const std::size_t d = model.dim();
  const std::size_t ew = model.kge_entity_width();
  const std::size_t n_rel = model.n_relations();
  const std::size_t n_aug = model.n_aug_relations();
  const bool use_ea = model.config().entity_attn;
  const bool use_ra = model.config().relation_attn;
  const double lambda = model.config().lambda;
  const double kge_w = model.config().kge_weight;

  EncoderCache enc;
  encoder_run(model, episode.entities, episode.support, &enc);
  const std::size_t n = enc.n;
  const auto& ent_n = enc.ent.back();
  const auto& rel_n = enc.rel.back();
  DecoderState st;
  decoder_setup(model, enc, &st);

  std::vector<double> dent_n(n * d, 0.0);
  std::vector<double> drel_n(n_aug * d, 0.0);
  std::vector<double> dz(n * ew, 0.0);
  std::vector<double> dq_acc(n * d, 0.0);
  std::vector<double> dk_acc(n * d, 0.0);

  std::unordered_map<std::size_t, std::vector<double>> att_rows;
  auto att_row_for = [&](std::size_t h) -> const std::vector<double>& {
    auto it = att_rows.find(h);
    if (it == att_rows.end())
      it = att_rows.emplace(h, attention_row(st, h, d)).first;
    return it->second;
  };

  const std::size_t q = d / 3;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  MlpCache mlp_cache;
  std::vector<double> x0(model.decoder_input_width());
  std::vector<double> s(n_rel);

  // Scores one ordered pair and, when training, pushes dL/dy back through the
  // decoder into the shared accumulators.
  auto process_pair = [&](std::size_t hl, std::size_t tl, double dy) -> double {
    std::size_t pos = 0;
    std::copy(ent_n.begin() + hl * d, ent_n.begin() + (hl + 1) * d,
              x0.begin());
    pos += d;
    std::copy(ent_n.begin() + tl * d, ent_n.begin() + (tl + 1) * d,
              x0.begin() + pos);
    pos += d;
    std::size_t a_pos = 0;
    if (use_ea) {
      const auto& row = att_row_for(hl);
      a_pos = pos;
      x0[pos++] = row[tl];
    }
    std::size_t s_pos = 0;
    if (use_ra) {
      relation_scores(model, st.z.data(), st.mm.data(), rel_n, hl, tl,
                      s.data());
      s_pos = pos;
      std::copy(s.begin(), s.end(), x0.begin() + pos);
      pos += n_rel;
    }

    const double y = mlp_forward(model, x0, &mlp_cache, rng, training);
    if (!grads) return y;

    const double dzfinal = dy * y * (1.0 - y);
    std::vector<double> dx0 = mlp_backward(model, mlp_cache, dzfinal, grads);

    for (std::size_t k = 0; k < d; ++k) {
      dent_n[hl * d + k] += dx0[k];
      dent_n[tl * d + k] += dx0[d + k];
    }
    if (use_ea) {
      const double da = dx0[a_pos];
      if (da != 0.0) {
        const auto& row = att_row_for(hl);
        const double at = row[tl];
        const double* qh = st.queries.data() + hl * d;
        double* dqh = dq_acc.data() + hl * d;
        for (std::size_t e = 0; e < n; ++e) {
          const double datt =
              da * at * ((e == tl ? 1.0 : 0.0) - row[e]) * scale;
          if (datt == 0.0) continue;
          const double* ke = st.keys.data() + e * d;
          double* dke = dk_acc.data() + e * d;
          for (std::size_t k = 0; k < d; ++k) {
            dqh[k] += datt * ke[k];
            dke[k] += datt * qh[k];
          }
        }
      }
    }
    if (use_ra) {
      const double* zh = st.z.data() + hl * ew;
      const double* zt = st.z.data() + tl * ew;
      double* dzh = dz.data() + hl * ew;
      double* dzt = dz.data() + tl * ew;
      if (model.config().kind == KgeKind::kHake) {
        for (std::size_t r = 0; r < n_rel; ++r) {
          const double ds = dx0[s_pos + r];
          if (ds == 0.0) continue;
          const double* row = rel_n.data() + r * d;
          const double* mmr = st.mm.data() + r * q;
          double* drow = drel_n.data() + r * d;
          for (std::size_t j = 0; j < q; ++j) {
            const double dj = safe_divisor(zh[j]);
            const double rinf = zt[j] / dj;
            dzt[j] += ds * mmr[j] / dj;
            if (std::abs(zh[j]) > kDivFloor)
              dzh[j] -= ds * mmr[j] * zt[j] / (dj * dj);
            const double rb = row[2 * q + j];
            const double c = std::max(1.0 - rb, kDivFloor);
            drow[q + j] += ds * rinf / c;
            double drb = ds * rinf / c;
            if (1.0 - rb > kDivFloor)
              drb += ds * rinf * (row[q + j] + rb) / (c * c);
            drow[2 * q + j] += drb;
            drow[j] += ds * (zt[q + j] - zh[q + j]);
            dzt[q + j] += ds * row[j];
            dzh[q + j] -= ds * row[j];
          }
        }
      } else {
        const std::size_t half = d / 2;
        for (std::size_t r = 0; r < n_rel; ++r) {
          const double ds = dx0[s_pos + r];
          if (ds == 0.0) continue;
          const double* row = rel_n.data() + r * d;
          double* drow = drel_n.data() + r * d;
          for (std::size_t j = 0; j < half; ++j) {
            dzh[j] += ds * row[j];
            drow[j] += ds * zh[j];
            dzt[j] -= ds * row[half + j];
            drow[half + j] -= ds * zt[j];
          }
        }
      }
    }
    return y;
  };

  HtemLoss loss;
  const std::size_t n_pos = episode.query.size();
  const std::size_t n_neg = episode.negatives.size();
  for (const Triple& t : episode.query) {
    const std::size_t hl = find_local(episode.entities, t.head);
    const std::size_t tl = find_local(episode.entities, t.tail);
    const double dy = grads ? -1.0 / static_cast<double>(n_pos) : 0.0;
    const double y = process_pair(hl, tl, dy);
    loss.positive_term += (1.0 - y) / static_cast<double>(n_pos);
  }
  for (const auto& [h, t] : episode.negatives) {
    const std::size_t hl = find_local(episode.entities, h);
    const std::size_t tl = find_local(episode.entities, t);
    const double dy = grads ? 1.0 / static_cast<double>(n_neg) : 0.0;
    const double y = process_pair(hl, tl, dy);
    loss.negative_term += y / static_cast<double>(n_neg);
  }

  if (kge_w > 0.0) {
    const KgeKind kind = model.config().kind;
    for (const Triple& t : episode.support) {
      const std::size_t hl = find_local(episode.entities, t.head);
      const std::size_t tl = find_local(episode.entities, t.tail);
      const double* zh = st.z.data() + hl * ew;
      const double* zt = st.z.data() + tl * ew;
      const double* row = rel_n.data() + static_cast<std::size_t>(t.rel) * d;
      const double f = kind == KgeKind::kHake
                           ? hake_score_parts(zh, row, zt, d / 3, lambda)
                           : pairre_score_parts(zh, row, zt, d / 2, 1);
      loss.kge_term += kge_w * softplus(-f);
      if (grads) {
        const double df = -kge_w * stable_sigmoid(-f);
        parts_grad(kind, zh, row, zt, ew, d, lambda, df,
                   dz.data() + hl * ew,
                   drel_n.data() + static_cast<std::size_t>(t.rel) * d,
                   dz.data() + tl * ew);
      }
    }
  }
  loss.total = loss.positive_term + loss.negative_term + loss.kge_term;

  if (grads) {
    double* g_we = grads->data() + model.offset_of("w_elem");
    double* g_wq = grads->data() + model.offset_of("w_query");
    double* g_wk = grads->data() + model.offset_of("w_key");
    for (std::size_t e = 0; e < n; ++e) {
      outer_add(g_we, dz.data() + e * ew, ent_n.data() + e * d, ew, d);
      matvec_t_add(model.w_elem(), dz.data() + e * ew, dent_n.data() + e * d,
                   ew, d);
      outer_add(g_wq, dq_acc.data() + e * d, ent_n.data() + e * d, d, d);
      matvec_t_add(model.w_query(), dq_acc.data() + e * d,
                   dent_n.data() + e * d, d, d);
      outer_add(g_wk, dk_acc.data() + e * d, ent_n.data() + e * d, d, d);
      matvec_t_add(model.w_key(), dk_acc.data() + e * d, dent_n.data() + e * d,
                   d, d);
    }
    encoder_backward(model, episode.entities, enc, &dent_n, &drel_n, grads);
  }
  return loss;
}

HtemScorer::HtemScorer(const HtemModel& model,
                       const std::vector<EntityId>& entities,
                       const std::vector<Triple>& triples)
    : model_(model), entities_(entities) {
  EncoderCache enc;
  encoder_run(model, entities_, triples, &enc);
  ent_reps_ = enc.ent.back();
  rel_reps_ = enc.rel.back();
  DecoderState st;
  decoder_setup(model, enc, &st);
  kge_ent_ = std::move(st.z);
  keys_ = std::move(st.keys);
  queries_ = std::move(st.queries);
  mm_cache_ = std::move(st.mm);
  att_max_.assign(entities_.size(), 0.0);
  att_denom_.assign(entities_.size(), 0.0);
  att_ready_.assign(entities_.size(), 0);
}

std::size_t HtemScorer::local(EntityId e) const {
  return find_local(entities_, e);
}

double HtemScorer::entity_attention(EntityId h, EntityId t) const {
  const std::size_t d = model_.dim();
  const std::size_t n = entities_.size();
  const std::size_t hl = local(h);
  const std::size_t tl = local(t);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const double* qh = queries_.data() + hl * d;
  if (!att_ready_[hl]) {
    double mx = -1e300;
    std::vector<double> logits(n);
    for (std::size_t e = 0; e < n; ++e) {
      const double* ke = keys_.data() + e * d;
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k) dot += qh[k] * ke[k];
      logits[e] = dot * scale;
      mx = std::max(mx, logits[e]);
    }
    double denom = 0.0;
    for (std::size_t e = 0; e < n; ++e) denom += std::exp(logits[e] - mx);
    att_max_[hl] = mx;
    att_denom_[hl] = denom;
    att_ready_[hl] = 1;
  }
  const double* kt = keys_.data() + tl * d;
  double dot = 0.0;
  for (std::size_t k = 0; k < d; ++k) dot += qh[k] * kt[k];
  return std::exp(dot * scale - att_max_[hl]) / att_denom_[hl];
}

std::vector<double> HtemScorer::relation_attention(EntityId h,
                                                   EntityId t) const {
  std::vector<double> s(model_.n_relations());
  relation_scores(model_, kge_ent_.data(), mm_cache_.data(), rel_reps_,
                  local(h), local(t), s.data());
  return s;
}

double HtemScorer::score(EntityId h, EntityId t) const {
  const std::size_t d = model_.dim();
  const std::size_t hl = local(h);
  const std::size_t tl = local(t);
  std::vector<double> x0(model_.decoder_input_width());
  std::size_t pos = 0;
  std::copy(ent_reps_.begin() + hl * d, ent_reps_.begin() + (hl + 1) * d,
            x0.begin());
  pos += d;
  std::copy(ent_reps_.begin() + tl * d, ent_reps_.begin() + (tl + 1) * d,
            x0.begin() + pos);
  pos += d;
  if (model_.config().entity_attn) x0[pos++] = entity_attention(h, t);
  if (model_.config().relation_attn) {
    relation_scores(model_, kge_ent_.data(), mm_cache_.data(), rel_reps_, hl,
                    tl, x0.data() + pos);
    pos += model_.n_relations();
  }
  MlpCache cache;
  return mlp_forward(model_, x0, &cache, nullptr, false);
}

std::vector<ScoredPair> predict_pairs(const HtemModel& model,
                                      const std::vector<EntityId>& entities,
                                      const std::vector<Triple>& triples,
                                      double theta_ht) {
  HtemScorer scorer(model, entities, triples);
  std::unordered_set<std::uint64_t> connected;
  connected.reserve(triples.size() * 2);
  for (const Triple& t : triples) connected.insert(pack_pair(t.head, t.tail));
  std::vector<ScoredPair> out;
  for (EntityId h : entities) {
    for (EntityId t : entities) {
      if (h == t) continue;
      if (connected.count(pack_pair(h, t))) continue;
      const double y = scorer.score(h, t);
      if (y > theta_ht) out.push_back({h, t, y});
    }
  }
  return out;
}

HtemModel train_htem(const PartitionResult& partition,
                     const std::vector<Triple>& valid, std::size_t n_entities,
                     std::size_t n_base_relations, const HtemConfig& config) {
  HtemModel model(config, n_entities, n_base_relations);
  auto init_rng = make_rng(config.seed, "htem-init");
  model.init_random(init_rng);
  auto train_rng = make_rng(config.seed, "htem-train");
  auto eval_rng = make_rng(config.seed, "htem-eval");

  const std::size_t n_sub = partition.groups.size();
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < n_sub; ++i) {
    if (partition.subgraph_triples[i].size() >= 5)
      usable.push_back(i);
    else
      log_warn("subgraph ", i, " has too few triples for episodes, skipping");
  }
  if (usable.empty()) fail("no subgraph is large enough to train on");

  // Fixed validation pairs per subgraph: held-out positives that fall inside
  // the subgraph plus an equal number of sampled unconnected pairs.
  struct EvalSet {
    std::vector<std::pair<EntityId, EntityId>> pos;
    std::vector<std::pair<EntityId, EntityId>> neg;
  };
  std::vector<EvalSet> eval_sets(n_sub);
  std::size_t total_eval_pos = 0;
  for (std::size_t i : usable) {
    const auto& group = partition.groups[i];
    std::unordered_set<std::uint64_t> connected;
    for (const Triple& t : partition.subgraph_triples[i])
      connected.insert(pack_pair(t.head, t.tail));
    std::unordered_set<std::uint64_t> seen;
    for (const Triple& v : valid) {
      if (!std::binary_search(group.begin(), group.end(), v.head)) continue;
      if (!std::binary_search(group.begin(), group.end(), v.tail)) continue;
      if (v.head == v.tail) continue;
      if (!seen.insert(pack_pair(v.head, v.tail)).second) continue;
      eval_sets[i].pos.emplace_back(v.head, v.tail);
    }
    const std::size_t want = eval_sets[i].pos.size();
    total_eval_pos += want;
    std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
    std::size_t attempts = 0;
    while (eval_sets[i].neg.size() < want && attempts < 200 * (want + 1)) {
      ++attempts;
      const EntityId h = group[pick(eval_rng)];
      const EntityId t = group[pick(eval_rng)];
      if (h == t || connected.count(pack_pair(h, t))) continue;
      if (seen.count(pack_pair(h, t))) continue;
      eval_sets[i].neg.emplace_back(h, t);
    }
  }
  const bool has_valid = total_eval_pos > 0;
  if (!has_valid)
    log_warn("no validation pairs fall inside any subgraph; "
             "keeping the final model state");

  auto evaluate = [&]() -> double {
    double pos_sum = 0.0, neg_sum = 0.0;
    std::size_t pos_n = 0, neg_n = 0;
    for (std::size_t i : usable) {
      if (eval_sets[i].pos.empty()) continue;
      HtemScorer scorer(model, partition.groups[i],
                        partition.subgraph_triples[i]);
      for (const auto& [h, t] : eval_sets[i].pos) {
        pos_sum += scorer.score(h, t);
        ++pos_n;
      }
      for (const auto& [h, t] : eval_sets[i].neg) {
        neg_sum += scorer.score(h, t);
        ++neg_n;
      }
    }
    const double mp = pos_n ? pos_sum / static_cast<double>(pos_n) : 0.0;
    const double mn = neg_n ? neg_sum / static_cast<double>(neg_n) : 0.0;
    return mp - mn;
  };

  Adam opt(model.params().size(), config.lr);
  std::vector<double> grads(model.params().size(), 0.0);
  double best_metric = -1e300;
  std::vector<double> best_params;

  for (std::size_t pass = 1; pass <= config.passes; ++pass) {
    std::vector<std::size_t> order = usable;
    std::shuffle(order.begin(), order.end(), train_rng);
    double pass_loss = 0.0;
    std::size_t pass_count = 0;
    for (std::size_t i : order) {
      SubgraphEpisode ep =
          make_episode(partition.groups[i], partition.subgraph_triples[i],
                       config.query_fraction, config.negatives_per_positive,
                       train_rng);
      if (ep.query.empty() || ep.support.empty()) {
        log_warn("subgraph ", i, " produced an empty episode, skipping");
        continue;
      }
      std::fill(grads.begin(), grads.end(), 0.0);
      const HtemLoss loss =
          htem_loss(model, ep, &grads, &train_rng, true);
      if (!std::isfinite(loss.total))
        fail("pair-likelihood training diverged at pass ", pass);
      opt.step(model.params(), grads);
      pass_loss += loss.total;
      ++pass_count;
    }
    if (pass_count) pass_loss /= static_cast<double>(pass_count);

    if (pass % config.eval_every == 0 || pass == config.passes) {
      if (has_valid) {
        const double metric = evaluate();
        log_info("pass ", pass, " loss ", pass_loss, " separation ", metric);
        if (metric > best_metric) {
          best_metric = metric;
          best_params = model.params();
        }
      } else {
        log_info("pass ", pass, " loss ", pass_loss);
      }
    }
  }
  if (has_valid && !best_params.empty()) model.params() = best_params;
  return model;
}

void save_htem(const HtemModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot open ", path, " for writing");
  const HtemConfig& c = model.config();
  out << "htem " << kge_kind_name(c.kind) << ' ' << c.dim << ' '
      << model.n_entities() << ' ' << model.n_relations() << ' ' << c.bases
      << ' ' << c.layers << ' ' << c.mlp_layers << ' ' << c.mlp_hidden << '\n';
  char buf[64];
  auto fmt = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  out << fmt(c.lambda) << ' ' << (c.entity_attn ? 1 : 0) << ' '
      << (c.relation_attn ? 1 : 0) << ' ' << fmt(c.dropout) << ' '
      << fmt(c.leaky_slope) << ' ' << fmt(c.kge_weight) << '\n';
  for (const auto& t : model.tensors()) {
    out << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
    const double* data = model.params().data() + t.offset;
    for (std::size_t r = 0; r < t.rows; ++r) {
      for (std::size_t cidx = 0; cidx < t.cols; ++cidx) {
        if (cidx) out << ' ';
        out << fmt(data[r * t.cols + cidx]);
      }
      out << '\n';
    }
  }
  if (!out) fail("failed writing model to ", path);
}

HtemModel load_htem(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open ", path);
  std::string magic, kind_name;
  std::size_t dim, n_ent, n_rel, bases, layers, mlp_layers, mlp_hidden;
  if (!(in >> magic >> kind_name >> dim >> n_ent >> n_rel >> bases >> layers >>
        mlp_layers >> mlp_hidden) ||
      magic != "htem")
    fail("malformed model header in ", path);
  HtemConfig config;
  if (kind_name == kge_kind_name(KgeKind::kHake)) {
    config.kind = KgeKind::kHake;
  } else if (kind_name == kge_kind_name(KgeKind::kPairRE)) {
    config.kind = KgeKind::kPairRE;
  } else {
    fail("unknown model kind ", kind_name, " in ", path);
  }
  config.dim = dim;
  config.bases = bases;
  config.layers = layers;
  config.mlp_layers = mlp_layers;
  config.mlp_hidden = mlp_hidden;
  int ea = 0, ra = 0;
  if (!(in >> config.lambda >> ea >> ra >> config.dropout >>
        config.leaky_slope >> config.kge_weight))
    fail("malformed model header in ", path);
  config.entity_attn = ea != 0;
  config.relation_attn = ra != 0;

  HtemModel model(config, n_ent, n_rel);
  std::size_t loaded = 0;
  std::string name;
  std::size_t rows, cols;
  while (in >> name >> rows >> cols) {
    const HtemModel::Tensor* tensor = nullptr;
    for (const auto& t : model.tensors())
      if (t.name == name) tensor = &t;
    if (!tensor) fail("unexpected tensor ", name, " in ", path);
    if (tensor->rows != rows || tensor->cols != cols)
      fail("tensor ", name, " in ", path, " has unexpected shape");
    for (std::size_t i = 0; i < rows * cols; ++i) {
      if (!(in >> model.params()[tensor->offset + i]))
        fail("truncated tensor ", name, " in ", path);
    }
    ++loaded;
  }
  if (loaded != model.tensors().size())
    fail("model file ", path, " is missing tensors");
  return model;
}

}  // namespace tsp
