#include "tsp/kge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tsp/adam.hpp"
#include "tsp/log.hpp"
#include "tsp/rng.hpp"

namespace tsp {

namespace {

constexpr double kDivEps = 1e-6;

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double softplus(double x) {
  // log(1 + e^x) without overflow for large |x|.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double log_sigmoid(double x) { return -softplus(-x); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

const char* kge_kind_name(KgeKind kind) {
  return kind == KgeKind::kHake ? "hake" : "pairre";
}

double hake_score_parts(const double* ent_h, const double* rel,
                        const double* ent_t, std::size_t q, double lambda) {
  double mod_sq = 0.0;
  double phase_l1 = 0.0;
  for (std::size_t j = 0; j < q; ++j) {
    const double v = ent_h[j] * rel[q + j] - ent_t[j];
    mod_sq += v * v;
    const double w = ent_h[q + j] + rel[j] - ent_t[q + j];
    phase_l1 += std::abs(std::sin(w * 0.5));
  }
  return -std::sqrt(mod_sq) - lambda * phase_l1;
}

double pairre_score_parts(const double* ent_h, const double* rel,
                          const double* ent_t, std::size_t half,
                          int norm_order) {
  if (norm_order == 2) {
    double acc = 0.0;
    for (std::size_t j = 0; j < half; ++j) {
      const double u = ent_h[j] * rel[j] - ent_t[j] * rel[half + j];
      acc += u * u;
    }
    return -std::sqrt(acc);
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < half; ++j) {
    const double u = ent_h[j] * rel[j] - ent_t[j] * rel[half + j];
    acc += std::abs(u);
  }
  return -acc;
}

KgeModel::KgeModel(KgeKind kind, std::size_t dim, std::size_t n_entities,
                   std::size_t n_relations, double lambda, double alpha,
                   int pairre_norm)
    : kind_(kind),
      dim_(dim),
      n_entities_(n_entities),
      n_relations_(n_relations),
      lambda_(lambda),
      alpha_(alpha),
      pairre_norm_(pairre_norm) {
  if (kind_ == KgeKind::kHake && dim_ % 3 != 0)
    fail("modulus/phase model needs dim divisible by 3, got ", dim_);
  if (kind_ == KgeKind::kPairRE && dim_ % 2 != 0)
    fail("paired-projection model needs even dim, got ", dim_);
  if (pairre_norm_ != 1 && pairre_norm_ != 2)
    fail("norm order must be 1 or 2, got ", pairre_norm_);
  ents_.assign(n_entities_ * entity_width(), 0.0);
  rels_.assign(n_relations_ * relation_width(), 0.0);
}

std::size_t KgeModel::entity_width() const {
  return kind_ == KgeKind::kHake ? 2 * (dim_ / 3) : dim_ / 2;
}

double KgeModel::score(EntityId h, RelationId r, EntityId t) const {
  const double* eh = entity(h);
  const double* et = entity(t);
  const double* rr = relation(r);
  if (kind_ == KgeKind::kPairRE)
    return pairre_score_parts(eh, rr, et, dim_ / 2, pairre_norm_);

  const std::size_t q = dim_ / 3;
  double mod_sq = 0.0;
  double phase_l1 = 0.0;
  for (std::size_t j = 0; j < q; ++j) {
    const double v = std::abs(eh[j]) * rr[q + j] - std::abs(et[j]);
    mod_sq += v * v;
    const double w = eh[q + j] + rr[j] - et[q + j];
    phase_l1 += std::abs(std::sin(w * 0.5));
  }
  return -std::sqrt(mod_sq) - lambda_ * phase_l1;
}

void KgeModel::score_grad(EntityId h, RelationId r, EntityId t, double g,
                          std::vector<double>& grad_ents,
                          std::vector<double>& grad_rels) const {
  const double* eh = entity(h);
  const double* et = entity(t);
  const double* rr = relation(r);
  const std::size_t ew = entity_width();
  double* gh = grad_ents.data() + h * ew;
  double* gt = grad_ents.data() + t * ew;
  double* gr = grad_rels.data() + r * relation_width();

  if (kind_ == KgeKind::kPairRE) {
    const std::size_t half = dim_ / 2;
    if (pairre_norm_ == 2) {
      double acc = 0.0;
      for (std::size_t j = 0; j < half; ++j) {
        const double u = eh[j] * rr[j] - et[j] * rr[half + j];
        acc += u * u;
      }
      const double norm = std::sqrt(acc);
      if (norm <= 0.0) return;
      for (std::size_t j = 0; j < half; ++j) {
        const double u = eh[j] * rr[j] - et[j] * rr[half + j];
        const double du = g * (-u / norm);
        gh[j] += du * rr[j];
        gr[j] += du * eh[j];
        gt[j] -= du * rr[half + j];
        gr[half + j] -= du * et[j];
      }
      return;
    }
    for (std::size_t j = 0; j < half; ++j) {
      const double u = eh[j] * rr[j] - et[j] * rr[half + j];
      const double du = g * (-sgn(u));
      gh[j] += du * rr[j];
      gr[j] += du * eh[j];
      gt[j] -= du * rr[half + j];
      gr[half + j] -= du * et[j];
    }
    return;
  }

  const std::size_t q = dim_ / 3;
  double mod_sq = 0.0;
  for (std::size_t j = 0; j < q; ++j) {
    const double v = std::abs(eh[j]) * rr[q + j] - std::abs(et[j]);
    mod_sq += v * v;
  }
  const double norm = std::sqrt(mod_sq);
  for (std::size_t j = 0; j < q; ++j) {
    if (norm > 0.0) {
      const double v = std::abs(eh[j]) * rr[q + j] - std::abs(et[j]);
      const double dv = g * (-v / norm);
      gh[j] += dv * rr[q + j] * sgn(eh[j]);
      gr[q + j] += dv * std::abs(eh[j]);
      gt[j] -= dv * sgn(et[j]);
    }
    const double w = eh[q + j] + rr[j] - et[q + j];
    const double s = std::sin(w * 0.5);
    const double dw = g * (-lambda_ * sgn(s) * std::cos(w * 0.5) * 0.5);
    gh[q + j] += dw;
    gr[j] += dw;
    gt[q + j] -= dw;
  }
}

void KgeModel::init_random(std::mt19937_64& rng) {
  if (kind_ == KgeKind::kHake) {
    const std::size_t q = dim_ / 3;
    std::uniform_real_distribution<double> mod(0.5, 1.5);
    std::uniform_real_distribution<double> phase(-M_PI, M_PI);
    std::uniform_real_distribution<double> bias(-0.3, 0.3);
    for (std::size_t e = 0; e < n_entities_; ++e) {
      double* row = entity(static_cast<EntityId>(e));
      for (std::size_t j = 0; j < q; ++j) row[j] = mod(rng);
      for (std::size_t j = 0; j < q; ++j) row[q + j] = phase(rng);
    }
    for (std::size_t r = 0; r < n_relations_; ++r) {
      double* row = relation(static_cast<RelationId>(r));
      for (std::size_t j = 0; j < q; ++j) row[j] = phase(rng);
      for (std::size_t j = 0; j < q; ++j) row[q + j] = mod(rng);
      for (std::size_t j = 0; j < q; ++j) row[2 * q + j] = bias(rng);
    }
    return;
  }
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  for (double& x : ents_) x = unif(rng);
  for (double& x : rels_) x = unif(rng);
  renormalize_entities();
}

void KgeModel::renormalize_entities() {
  if (kind_ != KgeKind::kPairRE) return;
  const std::size_t w = entity_width();
  for (std::size_t e = 0; e < n_entities_; ++e) {
    double* row = ents_.data() + e * w;
    double acc = 0.0;
    for (std::size_t j = 0; j < w; ++j) acc += row[j] * row[j];
    const double norm = std::sqrt(acc);
    if (norm <= 0.0) continue;
    for (std::size_t j = 0; j < w; ++j) row[j] /= norm;
  }
}

bool operator==(const KgeModel& a, const KgeModel& b) {
  return a.kind_ == b.kind_ && a.dim_ == b.dim_ &&
         a.n_entities_ == b.n_entities_ && a.n_relations_ == b.n_relations_ &&
         a.lambda_ == b.lambda_ && a.alpha_ == b.alpha_ &&
         a.pairre_norm_ == b.pairre_norm_ && a.ents_ == b.ents_ &&
         a.rels_ == b.rels_;
}

std::vector<double> infer_relation(const KgeModel& model, EntityId h,
                                   EntityId t) {
  const double* eh = model.entity(h);
  const double* et = model.entity(t);
  if (model.kind() == KgeKind::kPairRE) {
    const std::size_t half = model.dim() / 2;
    std::vector<double> out(2 * half);
    std::copy(eh, eh + half, out.begin());
    std::copy(et, et + half, out.begin() + half);
    return out;
  }
  const std::size_t q = model.dim() / 3;
  std::vector<double> out(2 * q);
  for (std::size_t j = 0; j < q; ++j) {
    out[j] = std::abs(et[j]) / std::max(std::abs(eh[j]), kDivEps);
    out[q + j] = et[q + j] - eh[q + j];
  }
  return out;
}

std::vector<double> relation_attention_vector(const KgeModel& model,
                                              EntityId h, EntityId t) {
  const std::vector<double> inferred = infer_relation(model, h, t);
  std::vector<double> scores(model.n_relations(), 0.0);
  if (model.kind() == KgeKind::kPairRE) {
    const std::size_t half = model.dim() / 2;
    for (std::size_t r = 0; r < model.n_relations(); ++r) {
      const double* rel = model.relation(static_cast<RelationId>(r));
      double acc = 0.0;
      for (std::size_t j = 0; j < half; ++j)
        acc += inferred[j] * rel[j] - inferred[half + j] * rel[half + j];
      scores[r] = acc;
    }
    return scores;
  }
  const std::size_t q = model.dim() / 3;
  for (std::size_t r = 0; r < model.n_relations(); ++r) {
    const double* rel = model.relation(static_cast<RelationId>(r));
    double acc = 0.0;
    for (std::size_t j = 0; j < q; ++j) {
      const double mm =
          (rel[q + j] + rel[2 * q + j]) /
          std::max(1.0 - rel[2 * q + j], kDivEps);
      acc += inferred[j] * mm + inferred[q + j] * rel[j];
    }
    scores[r] = acc;
  }
  return scores;
}

std::vector<Triple> negative_sample(
    const std::unordered_set<std::uint64_t>& known_keys, const Triple& triple,
    std::size_t k, std::size_t n_entities, std::mt19937_64& rng) {
  constexpr int kMaxRetries = 100;
  std::vector<Triple> out;
  out.reserve(k);
  std::uniform_int_distribution<EntityId> pick_entity(
      0, static_cast<EntityId>(n_entities - 1));
  std::uniform_int_distribution<int> coin(0, 1);
  for (std::size_t i = 0; i < k; ++i) {
    bool found = false;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
      Triple cand = triple;
      if (coin(rng) == 0) cand.head = pick_entity(rng);
      else cand.tail = pick_entity(rng);
      if (known_keys.count(pack_triple(cand))) continue;
      out.push_back(cand);
      found = true;
      break;
    }
    if (!found) {
      log_warn("negative sampling saturated; emitting ", out.size(),
               " of ", k, " corruptions");
      break;
    }
  }
  return out;
}

namespace {

double batch_loss(const KgeModel& model, const TrainBatch& batch,
                  bool weight_grads, std::vector<double>* grad_ents,
                  std::vector<double>* grad_rels) {
  if (batch.positives.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(batch.positives.size());
  const double alpha = model.alpha();
  double total = 0.0;
  std::vector<double> fneg, p;

  for (std::size_t i = 0; i < batch.positives.size(); ++i) {
    const Triple& pos = batch.positives[i];
    const double fpos = model.score(pos.head, pos.rel, pos.tail);
    total += -log_sigmoid(fpos) * inv_n;
    if (grad_ents != nullptr) {
      model.score_grad(pos.head, pos.rel, pos.tail, -sigmoid(-fpos) * inv_n,
                       *grad_ents, *grad_rels);
    }

    const auto& negs = batch.negatives[i];
    if (negs.empty()) continue;
    fneg.resize(negs.size());
    p.resize(negs.size());
    double fmax = -1e300;
    for (std::size_t j = 0; j < negs.size(); ++j) {
      fneg[j] = model.score(negs[j].head, negs[j].rel, negs[j].tail);
      fmax = std::max(fmax, alpha * fneg[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < negs.size(); ++j) {
      p[j] = std::exp(alpha * fneg[j] - fmax);
      z += p[j];
    }
    double neg_term = 0.0;
    for (std::size_t j = 0; j < negs.size(); ++j) {
      p[j] /= z;
      neg_term += p[j] * log_sigmoid(-fneg[j]);
    }
    total += -neg_term * inv_n;
    if (grad_ents == nullptr) continue;

    for (std::size_t j = 0; j < negs.size(); ++j) {
      double g = p[j] * sigmoid(fneg[j]);
      if (weight_grads) {
        // d p_j / d f_k terms: softmax jacobian times log-sigmoid values.
        g += -alpha * p[j] * (log_sigmoid(-fneg[j]) - neg_term);
      }
      model.score_grad(negs[j].head, negs[j].rel, negs[j].tail, g * inv_n,
                       *grad_ents, *grad_rels);
    }
  }
  return total;
}

}  // namespace

double self_adversarial_loss(const KgeModel& model, const TrainBatch& batch,
                             std::vector<double>& grad_ents,
                             std::vector<double>& grad_rels,
                             bool weight_grads) {
  return batch_loss(model, batch, weight_grads, &grad_ents, &grad_rels);
}

double self_adversarial_loss_value(const KgeModel& model,
                                   const TrainBatch& batch,
                                   bool weight_grads) {
  return batch_loss(model, batch, weight_grads, nullptr, nullptr);
}

namespace {

double valid_metric(const KgeModel& model, const std::vector<Triple>& valid) {
  if (valid.empty()) return 0.0;
  double acc = 0.0;
  for (const Triple& t : valid)
    acc += log_sigmoid(model.score(t.head, t.rel, t.tail));
  return acc / static_cast<double>(valid.size());
}

}  // namespace

KgeModel train_kge(const KnowledgeGraph& kg, const DatasetSplit& split,
                   const KgeConfig& config) {
  KgeModel model(config.kind, config.dim, kg.num_entities(),
                 kg.num_relations(), config.lambda, config.alpha,
                 config.pairre_norm);
  std::mt19937_64 init_rng = make_rng(config.seed, "kge-init");
  model.init_random(init_rng);

  std::unordered_set<std::uint64_t> known;
  known.reserve(split.train.size() * 2);
  for (const Triple& t : split.train) known.insert(pack_triple(t));

  Adam opt_ents(model.entity_table().size(), config.lr);
  Adam opt_rels(model.relation_table().size(), config.lr);
  std::vector<double> grad_ents(model.entity_table().size(), 0.0);
  std::vector<double> grad_rels(model.relation_table().size(), 0.0);

  std::mt19937_64 rng = make_rng(config.seed, "kge-train");
  std::vector<Triple> order = split.train;

  std::vector<double> best_ents, best_rels;
  double best_metric = -1e300;
  std::size_t non_improving = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t end =
          std::min(order.size(), start + config.batch_size);
      TrainBatch batch;
      batch.positives.assign(order.begin() + start, order.begin() + end);
      batch.negatives.reserve(batch.positives.size());
      for (const Triple& t : batch.positives)
        batch.negatives.push_back(negative_sample(
            known, t, config.negatives, kg.num_entities(), rng));

      std::fill(grad_ents.begin(), grad_ents.end(), 0.0);
      std::fill(grad_rels.begin(), grad_rels.end(), 0.0);
      const double loss =
          self_adversarial_loss(model, batch, grad_ents, grad_rels,
                                config.adversarial_weight_grads);
      if (!std::isfinite(loss))
        fail("embedding training diverged at epoch ", epoch);
      epoch_loss += loss;
      ++n_batches;
      if (config.use_sgd) {
        auto& ents = model.entity_table();
        auto& rels = model.relation_table();
        const double lr = opt_ents.lr();
        for (std::size_t i = 0; i < ents.size(); ++i)
          ents[i] -= lr * grad_ents[i];
        for (std::size_t i = 0; i < rels.size(); ++i)
          rels[i] -= lr * grad_rels[i];
      } else {
        opt_ents.step(model.entity_table(), grad_ents);
        opt_rels.step(model.relation_table(), grad_rels);
      }
      model.renormalize_entities();
    }
    if (n_batches > 0) epoch_loss /= static_cast<double>(n_batches);
    log_debug("kge epoch ", epoch, " loss ", epoch_loss);

    if (!split.valid.empty() && epoch % config.eval_every == 0) {
      const double metric = valid_metric(model, split.valid);
      if (metric > best_metric) {
        best_metric = metric;
        best_ents = model.entity_table();
        best_rels = model.relation_table();
        non_improving = 0;
      } else if (++non_improving >= config.decay_patience) {
        const double lr = opt_ents.lr() * config.decay_factor;
        opt_ents.set_lr(lr);
        opt_rels.set_lr(lr);
        non_improving = 0;
        log_info("kge: validation stalled, lr now ", lr);
      }
      log_debug("kge epoch ", epoch, " valid ", metric);
    }
  }

  if (!best_ents.empty()) {
    model.entity_table() = std::move(best_ents);
    model.relation_table() = std::move(best_rels);
  }
  return model;
}

void save_kge(const KgeModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write ", path);
  std::string kind = kge_kind_name(model.kind());
  if (model.kind() == KgeKind::kPairRE && model.pairre_norm() == 2)
    kind += "-l2";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g %.17g", model.lambda(),
                model.alpha());
  out << kind << ' ' << model.dim() << ' ' << model.n_entities() << ' '
      << model.n_relations() << ' ' << buf << '\n';
  auto write_rows = [&](const std::vector<double>& table, std::size_t rows,
                        std::size_t width) {
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < width; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", table[i * width + j]);
        out << (j == 0 ? "" : " ") << buf;
      }
      out << '\n';
    }
  };
  write_rows(model.entity_table(), model.n_entities(), model.entity_width());
  write_rows(model.relation_table(), model.n_relations(),
             model.relation_width());
  if (!out) fail("error writing ", path);
}

KgeModel load_kge(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open ", path);
  std::string kind_str;
  std::size_t dim = 0, n_ent = 0, n_rel = 0;
  double lambda = 0.0, alpha = 0.0;
  if (!(in >> kind_str >> dim >> n_ent >> n_rel >> lambda >> alpha))
    fail(path, ": malformed checkpoint header");
  KgeKind kind;
  int norm = 1;
  if (kind_str == "hake") {
    kind = KgeKind::kHake;
  } else if (kind_str == "pairre") {
    kind = KgeKind::kPairRE;
  } else if (kind_str == "pairre-l2") {
    kind = KgeKind::kPairRE;
    norm = 2;
  } else {
    fail(path, ": unknown model kind '", kind_str, "'");
  }
  KgeModel model(kind, dim, n_ent, n_rel, lambda, alpha, norm);
  for (double& x : model.entity_table())
    if (!(in >> x)) fail(path, ": truncated entity table");
  for (double& x : model.relation_table())
    if (!(in >> x)) fail(path, ": truncated relation table");
  return model;
}

}  // namespace tsp
