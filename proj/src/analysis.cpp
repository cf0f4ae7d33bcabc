#include "tfa/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "tfa/error.hpp"
#include "tfa/rng.hpp"
#include "tfa/sae.hpp"
#include "tfa/temporal.hpp"

namespace tfa {

using nlohmann::json;

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

Eigen::MatrixXd stack(const std::vector<Eigen::MatrixXd>& parts) {
  Eigen::Index rows = 0;
  for (const auto& p : parts) rows += p.rows();
  Eigen::MatrixXd out(rows, parts.empty() ? 0 : parts.front().cols());
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p;
    r += p.rows();
  }
  return out;
}

std::vector<Eigen::MatrixXd> unstack(const Eigen::MatrixXd& all, const std::vector<Eigen::MatrixXd>& like) {
  std::vector<Eigen::MatrixXd> out;
  Eigen::Index r = 0;
  for (const auto& p : like) {
    out.push_back(all.middleRows(r, p.rows()));
    r += p.rows();
  }
  return out;
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double na = a.norm();
  double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

}  // namespace

const CodeKind& Encoding::kind(const std::string& name) const {
  for (const auto& k : kinds) {
    if (k.name == name) return k;
  }
  throw ConfigError("no code kind named '" + name + "'");
}

Encoder raw_encoder() {
  return [](const std::vector<Eigen::MatrixXd>& seqs) {
    return Encoding{{CodeKind{"raw", seqs}}, seqs};
  };
}

Encoder sae_encoder(SaeModel model) {
  return [model = std::move(model)](const std::vector<Eigen::MatrixXd>& seqs) {
    if (seqs.empty()) return Encoding{{CodeKind{to_string(model.kind), {}}}, {}};
    Eigen::MatrixXd x = stack(seqs);
    auto enc = encode_batch(model, x);
    Eigen::MatrixXd recon = decode(model, enc.codes);
    return Encoding{{CodeKind{to_string(model.kind), unstack(enc.codes, seqs)}}, unstack(recon, seqs)};
  };
}

Encoder temporal_encoder(TemporalModel model) {
  return [model = std::move(model)](const std::vector<Eigen::MatrixXd>& seqs) {
    Encoding out;
    CodeKind pred{"predictive", {}};
    CodeKind novel{"novel", {}};
    if (!seqs.empty()) {
      for (auto& c : tfa_forward(model, seqs)) {
        pred.per_sequence.push_back(std::move(c.z_p));
        novel.per_sequence.push_back(std::move(c.z_n));
        out.reconstruction.push_back(std::move(c.xhat));
      }
    }
    out.kinds.push_back(std::move(pred));
    if (!model.pred_only) out.kinds.push_back(std::move(novel));
    return out;
  };
}

Encoder model_encoder(const AnyModel& model) {
  if (const auto* s = std::get_if<SaeModel>(&model)) return sae_encoder(*s);
  return temporal_encoder(std::get<TemporalModel>(model));
}

std::optional<double> EventReport::gap() const {
  if (!within_mean || !across_mean) return std::nullopt;
  return *within_mean - *across_mean;
}

json EventReport::to_json() const {
  json j;
  j["kind"] = kind;
  j["within_mean"] = optional_json(within_mean);
  j["across_mean"] = optional_json(across_mean);
  j["gap"] = optional_json(gap());
  j["within_pairs"] = within_pairs;
  j["across_pairs"] = across_pairs;
  j["per_event_within"] = per_event_within;
  return j;
}

std::vector<std::vector<std::string>> token_event_labels(const ActivationSet& set) {
  std::vector<std::vector<std::string>> out;
  for (std::size_t i = 0; i < set.sequences.size(); ++i) {
    std::vector<std::string> labels(static_cast<std::size_t>(set.sequences[i].rows()));
    if (i < set.meta.size()) {
      for (const auto& e : set.meta[i].events) {
        if (e.end > labels.size() || e.start >= e.end) {
          throw DataError("event span out of range in sequence " + std::to_string(i));
        }
        for (std::size_t t = e.start; t < e.end; ++t) labels[t] = e.label;
      }
    }
    out.push_back(std::move(labels));
  }
  return out;
}

EventReport event_similarity(const std::string& kind, const std::vector<Eigen::MatrixXd>& codes,
                             const std::vector<std::vector<std::string>>& labels, Centering centering) {
  if (codes.size() != labels.size()) throw DataError("codes and labels cover different sequence counts");
  Eigen::RowVectorXd corpus_mean;
  if (centering == Centering::kCorpus && !codes.empty()) corpus_mean = stack(codes).colwise().mean();

  EventReport rep;
  rep.kind = kind;
  double within = 0.0;
  double across = 0.0;
  std::map<std::string, std::pair<double, std::size_t>> per_event;
  bool any_label = false;
  for (std::size_t s = 0; s < codes.size(); ++s) {
    const auto& lab = labels[s];
    if (lab.size() != static_cast<std::size_t>(codes[s].rows())) {
      throw DataError("labels do not match sequence " + std::to_string(s) + " length");
    }
    if (std::all_of(lab.begin(), lab.end(), [](const std::string& l) { return l.empty(); })) continue;
    any_label = true;
    if (codes[s].rows() < 2) continue;
    Eigen::MatrixXd sim = centering == Centering::kCorpus
                              ? cosine_similarity_matrix(codes[s].rowwise() - corpus_mean, false).values
                              : cosine_similarity_matrix(codes[s], true).values;
    for (std::size_t i = 0; i < lab.size(); ++i) {
      if (lab[i].empty()) continue;
      for (std::size_t j = i + 1; j < lab.size(); ++j) {
        if (lab[j].empty()) continue;
        double v = sim(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        if (lab[i] == lab[j]) {
          within += v;
          ++rep.within_pairs;
          auto& pe = per_event[lab[i]];
          pe.first += v;
          ++pe.second;
        } else {
          across += v;
          ++rep.across_pairs;
        }
      }
    }
  }
  if (!any_label) throw DataError("no event labels found");
  if (rep.within_pairs) rep.within_mean = within / static_cast<double>(rep.within_pairs);
  if (rep.across_pairs) rep.across_mean = across / static_cast<double>(rep.across_pairs);
  for (const auto& [label, sc] : per_event) rep.per_event_within[label] = sc.first / static_cast<double>(sc.second);
  return rep;
}

std::vector<EventReport> event_similarity_report(const ActivationSet& set, const Encoder& encoder,
                                                 Centering centering) {
  auto labels = token_event_labels(set);
  bool any = std::any_of(labels.begin(), labels.end(), [](const auto& l) {
    return std::any_of(l.begin(), l.end(), [](const std::string& s) { return !s.empty(); });
  });
  if (!any) throw DataError("activation set carries no event labels");
  auto enc = encoder(set.sequences);
  std::vector<EventReport> out;
  for (const auto& k : enc.kinds) out.push_back(event_similarity(k.name, k.per_sequence, labels, centering));
  return out;
}

std::vector<NoiseLevel> noise_robustness(const ActivationSet& set, const Encoder& encoder,
                                         const std::vector<double>& sigmas, std::uint64_t seed,
                                         std::size_t probe_sequence) {
  for (double s : sigmas) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw ConfigError("noise scales must be finite and non-negative");
  }
  if (probe_sequence >= set.sequences.size()) throw ConfigError("probe sequence index out of range");
  Eigen::MatrixXd clean = set.stacked();
  std::vector<NoiseLevel> out;
  for (double sigma : sigmas) {
    std::vector<Eigen::MatrixXd> noisy = set.sequences;
    if (sigma > 0.0) {
      for (std::size_t i = 0; i < noisy.size(); ++i) {
        auto rng = make_rng(seed, i);
        std::normal_distribution<double> nd(0.0, 1.0);
        for (Eigen::Index e = 0; e < noisy[i].size(); ++e) noisy[i](e) += sigma * nd(rng);
      }
    }
    auto enc = encoder(noisy);
    NoiseLevel lvl;
    lvl.sigma = sigma;
    lvl.explained_variance = reconstruction_metrics(clean, stack(enc.reconstruction)).explained_variance;
    for (const auto& k : enc.kinds) {
      lvl.similarity[k.name] = cosine_similarity_matrix(k.per_sequence[probe_sequence], true).values;
    }
    out.push_back(std::move(lvl));
  }
  return out;
}

json Dendrogram::to_json() const {
  json j;
  j["merges"] = json::array();
  for (const auto& m : merges) {
    j["merges"].push_back({{"left", m.left}, {"right", m.right}, {"distance", m.distance}, {"size", m.size}});
  }
  j["labels"] = labels;
  j["clusters"] = clusters;
  return j;
}

Dendrogram hierarchical_clusters(const Eigen::MatrixXd& codes, double threshold) {
  const auto n = static_cast<std::size_t>(codes.rows());
  if (n < 2) throw DataError("clustering needs at least two rows");
  Eigen::MatrixXd dist = (1.0 - cosine_similarity_matrix(codes, false).values.array()).max(0.0).matrix();

  std::vector<std::size_t> id(n);
  std::vector<std::size_t> size(n, 1);
  std::vector<bool> active(n, true);
  std::iota(id.begin(), id.end(), 0);

  Dendrogram out;
  for (std::size_t step = 0; step + 1 < n; ++step) {
    std::size_t best_a = 0, best_b = 0;
    double best = std::numeric_limits<double>::infinity();
    std::pair<std::size_t, std::size_t> best_ids{0, 0};
    for (std::size_t a = 0; a < n; ++a) {
      if (!active[a]) continue;
      for (std::size_t b = a + 1; b < n; ++b) {
        if (!active[b]) continue;
        double d = dist(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        std::pair<std::size_t, std::size_t> ids{std::min(id[a], id[b]), std::max(id[a], id[b])};
        if (d < best || (d == best && ids < best_ids)) {
          best = d;
          best_a = a;
          best_b = b;
          best_ids = ids;
        }
      }
    }
    const double na = static_cast<double>(size[best_a]);
    const double nb = static_cast<double>(size[best_b]);
    for (std::size_t k = 0; k < n; ++k) {
      if (!active[k] || k == best_a || k == best_b) continue;
      auto ki = static_cast<Eigen::Index>(k);
      double d = (na * dist(ki, static_cast<Eigen::Index>(best_a)) + nb * dist(ki, static_cast<Eigen::Index>(best_b))) /
                 (na + nb);
      dist(ki, static_cast<Eigen::Index>(best_a)) = d;
      dist(static_cast<Eigen::Index>(best_a), ki) = d;
    }
    out.merges.push_back({best_ids.first, best_ids.second, best, size[best_a] + size[best_b]});
    size[best_a] += size[best_b];
    id[best_a] = n + step;
    active[best_b] = false;
  }

  // flat clusters: union every merge at or below the threshold
  std::vector<std::size_t> parent(2 * n - 1);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < out.merges.size(); ++i) {
    if (out.merges[i].distance > threshold) continue;
    parent[find(out.merges[i].left)] = n + i;
    parent[find(out.merges[i].right)] = n + i;
  }
  std::map<std::size_t, std::size_t> label_of_root;
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto root = find(i);
    auto it = label_of_root.emplace(root, label_of_root.size()).first;
    out.labels[i] = it->second;
  }
  out.clusters = label_of_root.size();
  return out;
}

PhraseSpans phrase_spans_from_meta(const SequenceMeta& meta, std::size_t length) {
  std::optional<EventSpan> sp, v, op;
  for (const auto& e : meta.events) {
    std::optional<EventSpan>* slot = e.label == "SP" ? &sp : e.label == "V" ? &v : e.label == "OP" ? &op : nullptr;
    if (!slot) continue;
    if (*slot) throw DataError("phrase label '" + e.label + "' appears twice");
    *slot = e;
  }
  if (!sp || !v || !op) throw DataError("sequence lacks SP, V and OP phrase spans");
  for (const auto* s : {&*sp, &*v, &*op}) {
    if (s->end > length) throw DataError("phrase span '" + s->label + "' exceeds the sequence");
  }
  return {*sp, *v, *op};
}

Eigen::Matrix3d phrase_similarity(const Eigen::MatrixXd& codes, const PhraseSpans& spans) {
  std::array<const EventSpan*, 3> s{&spans.sp, &spans.v, &spans.op};
  for (const auto* p : s) {
    if (p->start >= p->end) throw DataError("empty phrase span");
    if (p->end > static_cast<std::size_t>(codes.rows())) throw DataError("phrase span out of range");
  }
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = a + 1; b < 3; ++b) {
      if (s[a]->start < s[b]->end && s[b]->start < s[a]->end) throw DataError("phrase spans overlap");
    }
  }
  std::array<Eigen::VectorXd, 3> mean;
  for (std::size_t a = 0; a < 3; ++a) {
    auto len = static_cast<Eigen::Index>(s[a]->end - s[a]->start);
    mean[a] = codes.middleRows(static_cast<Eigen::Index>(s[a]->start), len).colwise().mean().transpose();
  }
  Eigen::Matrix3d out;
  for (std::size_t a = 0; a < 3; ++a) {
    for (std::size_t b = 0; b < 3; ++b) {
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = cosine(mean[a], mean[b]);
    }
  }
  return out;
}

json GardenPathReport::to_json() const {
  auto pair_json = [](const GardenPathPair& p) {
    return json{{"ambiguous_v_sp", p.ambiguous_v_sp}, {"ambiguous_v_op", p.ambiguous_v_op},
                {"control_v_sp", p.control_v_sp},     {"control_v_op", p.control_v_op},
                {"sensitivity_v_sp", p.sensitivity_v_sp}, {"sensitivity_v_op", p.sensitivity_v_op}};
  };
  json j;
  j["kind"] = kind;
  j["mean"] = pair_json(mean);
  j["pairs"] = json::array();
  for (const auto& p : pairs) j["pairs"].push_back(pair_json(p));
  return j;
}

std::vector<GardenPathReport> garden_path_battery(const ActivationSet& ambiguous, const ActivationSet& control,
                                                  const Encoder& encoder) {
  if (ambiguous.sequences.empty() || ambiguous.size() != control.size()) {
    throw DataError("garden-path sets must hold the same non-zero number of paired sequences");
  }
  const std::size_t n = ambiguous.size();
  std::vector<PhraseSpans> amb_spans, ctl_spans;
  for (std::size_t i = 0; i < n; ++i) {
    amb_spans.push_back(phrase_spans_from_meta(ambiguous.meta.at(i), static_cast<std::size_t>(ambiguous.sequences[i].rows())));
    ctl_spans.push_back(phrase_spans_from_meta(control.meta.at(i), static_cast<std::size_t>(control.sequences[i].rows())));
  }
  auto amb = encoder(ambiguous.sequences);
  auto ctl = encoder(control.sequences);
  std::vector<GardenPathReport> out;
  for (std::size_t k = 0; k < amb.kinds.size(); ++k) {
    GardenPathReport rep;
    rep.kind = amb.kinds[k].name;
    const auto& ctl_kind = ctl.kind(rep.kind);
    for (std::size_t i = 0; i < n; ++i) {
      auto a = phrase_similarity(amb.kinds[k].per_sequence[i], amb_spans[i]);
      auto c = phrase_similarity(ctl_kind.per_sequence[i], ctl_spans[i]);
      GardenPathPair p;
      p.ambiguous_v_sp = a(1, 0);
      p.ambiguous_v_op = a(1, 2);
      p.control_v_sp = c(1, 0);
      p.control_v_op = c(1, 2);
      p.sensitivity_v_sp = std::abs(p.ambiguous_v_sp - p.control_v_sp);
      p.sensitivity_v_op = std::abs(p.ambiguous_v_op - p.control_v_op);
      rep.pairs.push_back(p);
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (const auto& p : rep.pairs) {
      rep.mean.ambiguous_v_sp += p.ambiguous_v_sp * inv;
      rep.mean.ambiguous_v_op += p.ambiguous_v_op * inv;
      rep.mean.control_v_sp += p.control_v_sp * inv;
      rep.mean.control_v_op += p.control_v_op * inv;
      rep.mean.sensitivity_v_sp += p.sensitivity_v_sp * inv;
      rep.mean.sensitivity_v_op += p.sensitivity_v_op * inv;
    }
    out.push_back(std::move(rep));
  }
  return out;
}

json SplitReport::to_json() const {
  json j;
  j["split_index"] = split_index;
  j["latents"] = order.size();
  j["predictive_mass_in_prefix"] = predictive_mass_in_prefix;
  j["novel_overlap"] = novel_overlap;
  j["effective_rank_predictive"] = effective_rank_predictive;
  j["effective_rank_novel"] = optional_json(effective_rank_novel);
  j["mean_l0_novel"] = mean_l0_novel;
  j["order"] = order;
  return j;
}

SplitReport dictionary_split(const Eigen::MatrixXd& predictive, const Eigen::MatrixXd& novel) {
  if (predictive.rows() != novel.rows() || predictive.cols() != novel.cols()) {
    throw DataError("predictive and novel code matrices differ in shape");
  }
  Eigen::VectorXd pmass = predictive.cwiseAbs().colwise().sum().transpose();
  Eigen::VectorXd nmass = novel.cwiseAbs().colwise().sum().transpose();
  double ptotal = pmass.sum();
  if (!(ptotal > 0.0)) throw DataError("predictive codes are all zero (untrained or degenerate model)");

  SplitReport rep;
  rep.order.resize(static_cast<std::size_t>(pmass.size()));
  std::iota(rep.order.begin(), rep.order.end(), 0);
  std::stable_sort(rep.order.begin(), rep.order.end(), [&](std::size_t a, std::size_t b) {
    return pmass(static_cast<Eigen::Index>(a)) > pmass(static_cast<Eigen::Index>(b));
  });
  double cum = 0.0;
  for (std::size_t i = 0; i < rep.order.size(); ++i) {
    cum += pmass(static_cast<Eigen::Index>(rep.order[i]));
    if (cum >= kSplitMassFraction * ptotal) {
      rep.split_index = i + 1;
      break;
    }
  }
  rep.predictive_mass_in_prefix = cum / ptotal;
  double ntotal = nmass.sum();
  double overlap = 0.0;
  for (std::size_t i = 0; i < rep.split_index; ++i) overlap += nmass(static_cast<Eigen::Index>(rep.order[i]));
  rep.novel_overlap = ntotal > 0.0 ? overlap / ntotal : 0.0;
  rep.effective_rank_predictive = effective_rank(predictive);
  if (ntotal > 0.0) rep.effective_rank_novel = effective_rank(novel);
  rep.mean_l0_novel = predictive.rows() > 0 ? static_cast<double>((novel.array() != 0.0).count()) /
                                                  static_cast<double>(novel.rows())
                                            : 0.0;
  return rep;
}

SplitReport dictionary_split_report(const TemporalModel& model, const ActivationSet& set) {
  if (set.sequences.empty()) throw DataError("activation set is empty");
  std::vector<Eigen::MatrixXd> zp, zn;
  for (auto& c : tfa_forward(model, set.sequences)) {
    zp.push_back(std::move(c.z_p));
    zn.push_back(std::move(c.z_n));
  }
  return dictionary_split(stack(zp), stack(zn));
}

json FourierReport::to_json() const {
  json j;
  j["columns"] = json::array();
  j["slow"] = json::array();
  j["fast"] = json::array();
  j["kinds"] = json::array();
  for (const auto& k : kinds) {
    j["columns"].push_back(k.kind);
    j["slow"].push_back(k.slow_cka);
    j["fast"].push_back(k.fast_cka);
    j["kinds"].push_back({{"kind", k.kind},
                          {"slow_cka", k.slow_cka},
                          {"fast_cka", k.fast_cka},
                          {"sequences_used", k.sequences_used},
                          {"spectrum", std::vector<double>(k.spectrum.data(), k.spectrum.data() + k.spectrum.size())}});
  }
  j["cutoffs"] = cutoffs;
  j["slow_spectrum"] = std::vector<double>(slow_spectrum.data(), slow_spectrum.data() + slow_spectrum.size());
  j["fast_spectrum"] = std::vector<double>(fast_spectrum.data(), fast_spectrum.data() + fast_spectrum.size());
  return j;
}

FourierReport fourier_alignment(const ActivationSet& set, const Encoder& encoder, FourierCutoff mode,
                                std::size_t probe_sequence) {
  if (set.sequences.empty()) throw DataError("activation set is empty");
  if (probe_sequence >= set.sequences.size()) throw ConfigError("probe sequence index out of range");
  auto enc = encoder(set.sequences);
  FourierReport rep;
  auto spectrum_of = [](const Eigen::MatrixXd& x) -> Eigen::VectorXd {
    try {
      return kernel_spectrum(cosine_similarity_matrix(x, true).values);
    } catch (const DataError&) {
      return {};
    }
  };
  std::vector<FourierSplit> splits;
  for (const auto& seq : set.sequences) {
    splits.push_back(fourier_split(seq, mode));
    rep.cutoffs.push_back(splits.back().cutoff);
  }
  rep.slow_spectrum = spectrum_of(splits[probe_sequence].slow);
  rep.fast_spectrum = spectrum_of(splits[probe_sequence].fast);
  for (const auto& k : enc.kinds) {
    FourierAlignment a;
    a.kind = k.name;
    for (std::size_t s = 0; s < splits.size(); ++s) {
      try {
        double slow = linear_cka(k.per_sequence[s], splits[s].slow);
        double fast = linear_cka(k.per_sequence[s], splits[s].fast);
        a.slow_cka += slow;
        a.fast_cka += fast;
        ++a.sequences_used;
      } catch (const DataError&) {
        // constant codes or a constant part carry no kernel structure
      }
    }
    if (a.sequences_used) {
      a.slow_cka /= static_cast<double>(a.sequences_used);
      a.fast_cka /= static_cast<double>(a.sequences_used);
    }
    a.spectrum = spectrum_of(k.per_sequence[probe_sequence]);
    rep.kinds.push_back(std::move(a));
  }
  return rep;
}

std::vector<TortuosityReport> code_tortuosity(const ActivationSet& set, const Encoder& encoder) {
  auto enc = encoder(set.sequences);
  std::vector<TortuosityReport> out;
  for (const auto& k : enc.kinds) {
    TortuosityReport rep;
    rep.kind = k.name;
    for (const auto& codes : k.per_sequence) {
      try {
        rep.per_sequence.push_back(tortuosity(codes));
      } catch (const DataError&) {
        rep.per_sequence.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    std::vector<double> ok;
    for (double v : rep.per_sequence) {
      if (std::isfinite(v)) ok.push_back(v);
    }
    if (ok.empty()) {
      rep.mean = rep.median = std::numeric_limits<double>::quiet_NaN();
    } else {
      rep.mean = std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
      std::sort(ok.begin(), ok.end());
      std::size_t h = ok.size() / 2;
      rep.median = ok.size() % 2 ? ok[h] : 0.5 * (ok[h - 1] + ok[h]);
    }
    out.push_back(std::move(rep));
  }
  return out;
}

}  // namespace tfa
