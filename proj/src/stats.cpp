#include "scmoa/stats.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "scmoa/rng.hpp"
#include "scmoa_embedded/stopwords_embed.hpp"

namespace scmoa {

double chi2_sf_1df(double x) {
  if (x <= 0) return 1.0;
  // For one degree of freedom, P(X > x) = erfc(sqrt(x / 2)).
  return std::erfc(std::sqrt(x / 2.0));
}

namespace {

// Regularized incomplete beta via Lentz's continued fraction.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-14;
  constexpr double kFpMin = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

double ibeta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                    a * std::log(x) + b * std::log(1.0 - x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return front * betacf(a, b, x) / a;
  }
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_two_sided_p(double t, double df) {
  if (df <= 0) return 1.0;
  double x = df / (df + t * t);
  return ibeta(df / 2.0, 0.5, x);
}

Decomposition decompose(const Contingency& t) {
  int64_t n = t.total();
  if (n <= 0) throw Error(ErrorCode::kEmptyInput, "contingency table is empty");
  Decomposition d;
  d.p_c = static_cast<double>(t.cc + t.cw) / static_cast<double>(n);
  d.p_w = 1.0 - d.p_c;
  d.advantage = static_cast<double>(t.wc - t.cw) / static_cast<double>(n);
  if (t.cc + t.cw > 0) {
    d.f_s = static_cast<double>(t.cc) / static_cast<double>(t.cc + t.cw);
  } else {
    d.degenerate_margin = true;
  }
  if (t.wc + t.ww > 0) {
    d.r_s = static_cast<double>(t.wc) / static_cast<double>(t.wc + t.ww);
  } else {
    d.degenerate_margin = true;
  }
  if (d.f_s && d.r_s) {
    if (*d.f_s >= 1.0) {
      d.dominance_ratio_infinite = *d.r_s > 0.0;
      if (*d.r_s == 0.0) d.dominance_ratio = 0.0;  // 0/0 treated as trivial
    } else {
      d.dominance_ratio = *d.r_s / (1.0 - *d.f_s);
    }
    d.nondeg_threshold = d.p_c / (d.p_c + d.p_w * *d.r_s);
  }
  return d;
}

McNemarResult mcnemar(int64_t b, int64_t c) {
  McNemarResult r;
  if (b + c == 0) return r;  // chi2 = 0, p = 1
  double diff = static_cast<double>(b - c);
  r.chi2 = diff * diff / static_cast<double>(b + c);
  r.p = chi2_sf_1df(r.chi2);
  return r;
}

BootstrapCi bootstrap_diff_ci(const std::vector<bool>& a, const std::vector<bool>& b,
                              int resamples, uint64_t seed) {
  if (a.size() != b.size())
    throw Error(ErrorCode::kLengthMismatch, "paired vectors must have equal length");
  if (a.empty()) throw Error(ErrorCode::kEmptyInput, "bootstrap over empty vectors");
  const size_t n = a.size();
  auto mean_diff = [&](auto index_of) {
    int64_t sum = 0;
    for (size_t i = 0; i < n; ++i) {
      size_t j = index_of(i);
      sum += (a[j] ? 1 : 0) - (b[j] ? 1 : 0);
    }
    return static_cast<double>(sum) / static_cast<double>(n);
  };

  BootstrapCi ci;
  ci.delta = mean_diff([](size_t i) { return i; });

  std::vector<double> deltas(resamples);
  for (int r = 0; r < resamples; ++r) {
    SplitMix64 rng(derive_seed(seed, static_cast<uint64_t>(r)));
    deltas[r] = mean_diff([&](size_t) { return static_cast<size_t>(rng.next_below(n)); });
  }
  std::sort(deltas.begin(), deltas.end());
  size_t lo_idx = static_cast<size_t>(std::floor(0.025 * resamples));
  size_t hi_idx = static_cast<size_t>(std::ceil(0.975 * resamples));
  if (hi_idx > 0) --hi_idx;
  lo_idx = std::min(lo_idx, deltas.size() - 1);
  hi_idx = std::min(hi_idx, deltas.size() - 1);
  ci.lo95 = deltas[lo_idx];
  ci.hi95 = deltas[hi_idx];
  return ci;
}

namespace {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

const std::unordered_set<std::string>& stopword_set() {
  static const std::unordered_set<std::string> kSet = [] {
    std::unordered_set<std::string> s;
    std::string_view text = embedded::kEnglishStopwords;
    size_t pos = 0;
    while (pos < text.size()) {
      size_t eol = text.find('\n', pos);
      if (eol == std::string_view::npos) eol = text.size();
      if (eol > pos) s.emplace(text.substr(pos, eol - pos));
      pos = eol + 1;
    }
    return s;
  }();
  return kSet;
}

}  // namespace

std::optional<double> trace_diversity(const std::vector<std::string>& traces,
                                      int max_features) {
  if (traces.size() < 2)
    throw Error(ErrorCode::kEmptyInput, "trace diversity needs at least two traces");
  const size_t n = traces.size();
  const auto& stop = stopword_set();

  std::vector<std::map<std::string, double>> counts(n);
  std::map<std::string, int64_t> corpus_freq;
  std::map<std::string, int64_t> doc_freq;
  for (size_t i = 0; i < n; ++i) {
    for (auto& tok : tokenize(traces[i])) {
      if (tok.size() < 2 || stop.count(tok)) continue;
      counts[i][tok] += 1.0;
      corpus_freq[tok] += 1;
    }
    for (const auto& [term, cnt] : counts[i]) {
      (void)cnt;
      doc_freq[term] += 1;
    }
  }
  if (corpus_freq.empty()) return std::nullopt;  // all traces degenerate

  // Vocabulary cap: by corpus frequency descending, then term ascending.
  std::set<std::string> vocab;
  if (static_cast<int>(corpus_freq.size()) <= max_features) {
    for (const auto& [term, freq] : corpus_freq) {
      (void)freq;
      vocab.insert(term);
    }
  } else {
    std::vector<std::pair<std::string, int64_t>> terms(corpus_freq.begin(),
                                                       corpus_freq.end());
    std::sort(terms.begin(), terms.end(), [](const auto& x, const auto& y) {
      if (x.second != y.second) return x.second > y.second;
      return x.first < y.first;
    });
    for (int i = 0; i < max_features; ++i) vocab.insert(terms[i].first);
  }

  // tf-idf with smoothed idf, L2-normalized.
  std::vector<std::map<std::string, double>> vecs(n);
  std::vector<double> norms(n, 0.0);
  const double dn = static_cast<double>(n);
  for (size_t i = 0; i < n; ++i) {
    for (const auto& [term, tf] : counts[i]) {
      if (!vocab.count(term)) continue;
      double idf = std::log((1.0 + dn) / (1.0 + static_cast<double>(doc_freq[term]))) + 1.0;
      double w = tf * idf;
      vecs[i][term] = w;
      norms[i] += w * w;
    }
    norms[i] = std::sqrt(norms[i]);
  }

  double total = 0.0;
  int64_t pairs = 0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      ++pairs;
      if (norms[i] == 0.0 || norms[j] == 0.0) {
        // An empty trace is orthogonal to everything: distance 1.
        total += 1.0;
        continue;
      }
      double dot = 0.0;
      const auto& small = vecs[i].size() <= vecs[j].size() ? vecs[i] : vecs[j];
      const auto& large = vecs[i].size() <= vecs[j].size() ? vecs[j] : vecs[i];
      for (const auto& [term, w] : small) {
        auto it = large.find(term);
        if (it != large.end()) dot += w * it->second;
      }
      total += 1.0 - dot / (norms[i] * norms[j]);
    }
  }
  return total / static_cast<double>(pairs);
}

ErrorCorrelation error_correlation(const std::vector<std::vector<bool>>& correct) {
  if (correct.empty()) throw Error(ErrorCode::kEmptyInput, "no problems");
  const size_t n = correct.size();
  const size_t agents = correct.front().size();
  if (agents < 2) throw Error(ErrorCode::kEmptyInput, "error correlation needs >= 2 agents");
  for (const auto& row : correct) {
    if (row.size() != agents)
      throw Error(ErrorCode::kLengthMismatch, "ragged correctness matrix");
  }

  std::vector<double> mean(agents, 0.0);
  for (const auto& row : correct) {
    for (size_t a = 0; a < agents; ++a) mean[a] += row[a] ? 0.0 : 1.0;  // error indicator
  }
  for (auto& m : mean) m /= static_cast<double>(n);

  ErrorCorrelation out;
  double sum = 0.0;
  for (size_t a = 0; a < agents; ++a) {
    for (size_t b = a + 1; b < agents; ++b) {
      double cov = 0.0, var_a = 0.0, var_b = 0.0;
      for (const auto& row : correct) {
        double ea = (row[a] ? 0.0 : 1.0) - mean[a];
        double eb = (row[b] ? 0.0 : 1.0) - mean[b];
        cov += ea * eb;
        var_a += ea * ea;
        var_b += eb * eb;
      }
      if (var_a == 0.0 || var_b == 0.0) {
        ++out.pairs_skipped;
        continue;
      }
      sum += cov / std::sqrt(var_a * var_b);
      ++out.pairs_used;
    }
  }
  if (out.pairs_used == 0)
    throw Error(ErrorCode::kDegenerateMargin, "all agent pairs have zero variance");
  out.rho_bar = sum / out.pairs_used;
  return out;
}

CalibrationReport calibration(const std::vector<double>& consensus,
                              const std::vector<bool>& correct, int bins) {
  if (consensus.empty()) throw Error(ErrorCode::kEmptyInput, "calibration over empty input");
  if (consensus.size() != correct.size())
    throw Error(ErrorCode::kLengthMismatch, "consensus/correct length mismatch");
  const size_t n = consensus.size();

  CalibrationReport report;
  report.bins.resize(bins);
  std::vector<double> conf_sum(bins, 0.0), acc_sum(bins, 0.0);
  for (int b = 0; b < bins; ++b) {
    report.bins[b].lo = static_cast<double>(b) / bins;
    report.bins[b].hi = static_cast<double>(b + 1) / bins;
  }
  for (size_t i = 0; i < n; ++i) {
    int b = std::min(static_cast<int>(consensus[i] * bins), bins - 1);
    b = std::max(b, 0);
    ++report.bins[b].count;
    conf_sum[b] += consensus[i];
    acc_sum[b] += correct[i] ? 1.0 : 0.0;
  }
  report.ece = 0.0;
  for (int b = 0; b < bins; ++b) {
    auto& bin = report.bins[b];
    if (bin.count == 0) continue;
    bin.mean_conf = conf_sum[b] / bin.count;
    bin.mean_acc = acc_sum[b] / bin.count;
    report.ece += (static_cast<double>(bin.count) / n) * std::fabs(bin.mean_conf - bin.mean_acc);
  }

  // Exact AUROC with ties counted 1/2, via average ranks.
  int64_t positives = 0;
  for (bool c : correct) positives += c ? 1 : 0;
  int64_t negatives = static_cast<int64_t>(n) - positives;
  if (positives == 0 || negatives == 0) {
    report.auroc = 0.5;
  } else {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t x, size_t y) { return consensus[x] < consensus[y]; });
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
      size_t j = i;
      while (j < n && consensus[order[j]] == consensus[order[i]]) ++j;
      double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
      for (size_t k = i; k < j; ++k) {
        if (correct[order[k]]) rank_sum_pos += avg_rank;
      }
      i = j;
    }
    report.auroc = (rank_sum_pos - static_cast<double>(positives) * (positives + 1) / 2.0) /
                   (static_cast<double>(positives) * static_cast<double>(negatives));
  }

  // Selective prediction: answer the highest-consensus fraction first.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t x, size_t y) { return consensus[x] > consensus[y]; });
  double running_correct = 0.0;
  report.abstention_curve.reserve(n);
  for (size_t k = 0; k < n; ++k) {
    running_correct += correct[order[k]] ? 1.0 : 0.0;
    AbstentionPoint pt;
    pt.coverage = static_cast<double>(k + 1) / n;
    pt.accuracy = running_correct / static_cast<double>(k + 1);
    report.abstention_curve.push_back(pt);
  }
  return report;
}

std::optional<double> fleiss_kappa(const std::vector<std::vector<std::string>>& ratings) {
  if (ratings.empty()) throw Error(ErrorCode::kEmptyInput, "no items");
  const size_t raters = ratings.front().size();
  if (raters < 2) throw Error(ErrorCode::kEmptyInput, "fleiss kappa needs >= 2 raters");

  std::set<std::string> categories;
  for (const auto& row : ratings) {
    if (row.size() != raters)
      throw Error(ErrorCode::kLengthMismatch, "ragged rating matrix");
    categories.insert(row.begin(), row.end());
  }
  if (categories.size() < 2) return std::nullopt;  // kappa undefined

  const double n_items = static_cast<double>(ratings.size());
  const double n_raters = static_cast<double>(raters);
  std::map<std::string, double> category_share;
  double p_bar = 0.0;
  for (const auto& row : ratings) {
    std::map<std::string, int> counts;
    for (const auto& label : row) ++counts[label];
    double agree = 0.0;
    for (const auto& [label, c] : counts) {
      agree += static_cast<double>(c) * (c - 1);
      category_share[label] += c;
    }
    p_bar += agree / (n_raters * (n_raters - 1.0));
  }
  p_bar /= n_items;
  double p_e = 0.0;
  for (auto& [label, total] : category_share) {
    (void)label;
    double share = total / (n_items * n_raters);
    p_e += share * share;
  }
  if (p_e >= 1.0) return std::nullopt;
  return (p_bar - p_e) / (1.0 - p_e);
}

DawidSkeneResult dawid_skene(const std::vector<std::vector<std::string>>& votes,
                             int max_iters, double tol) {
  if (votes.empty()) throw Error(ErrorCode::kEmptyInput, "no problems");
  const size_t n = votes.size();
  const size_t agents = votes.front().size();
  for (const auto& row : votes) {
    if (row.size() != agents)
      throw Error(ErrorCode::kLengthMismatch, "ragged vote matrix");
  }

  std::vector<std::string> labels;
  std::map<std::string, int> label_id;
  for (const auto& row : votes) {
    for (const auto& v : row) {
      if (!label_id.count(v)) {
        label_id[v] = static_cast<int>(labels.size());
        labels.push_back(v);
      }
    }
  }
  const size_t L = labels.size();

  // Posterior init from majority vote; ties split uniformly over the tied.
  std::vector<std::vector<double>> post(n, std::vector<double>(L, 0.0));
  for (size_t i = 0; i < n; ++i) {
    std::vector<int> counts(L, 0);
    for (const auto& v : votes[i]) ++counts[label_id[v]];
    int best = *std::max_element(counts.begin(), counts.end());
    int ties = 0;
    for (int c : counts) ties += c == best ? 1 : 0;
    for (size_t q = 0; q < L; ++q) {
      if (counts[q] == best) post[i][q] = 1.0 / ties;
    }
  }

  constexpr double kSmooth = 1e-9;
  DawidSkeneResult result;
  std::vector<double> prior(L, 0.0);
  std::vector<std::vector<std::vector<double>>> confusion(
      agents, std::vector<std::vector<double>>(L, std::vector<double>(L, 0.0)));

  for (int iter = 0; iter < max_iters; ++iter) {
    // M-step: class priors and per-agent confusion matrices.
    std::fill(prior.begin(), prior.end(), 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t q = 0; q < L; ++q) prior[q] += post[i][q];
    for (auto& p : prior) p = (p + kSmooth) / (n + L * kSmooth);

    for (size_t j = 0; j < agents; ++j) {
      for (size_t q = 0; q < L; ++q) {
        std::fill(confusion[j][q].begin(), confusion[j][q].end(), kSmooth);
      }
      for (size_t i = 0; i < n; ++i) {
        int obs = label_id[votes[i][j]];
        for (size_t q = 0; q < L; ++q) confusion[j][q][obs] += post[i][q];
      }
      for (size_t q = 0; q < L; ++q) {
        double row_sum = std::accumulate(confusion[j][q].begin(), confusion[j][q].end(), 0.0);
        for (size_t o = 0; o < L; ++o) confusion[j][q][o] /= row_sum;
      }
    }

    // E-step in log space.
    double max_delta = 0.0;
    for (size_t i = 0; i < n; ++i) {
      std::vector<double> logp(L, 0.0);
      for (size_t q = 0; q < L; ++q) {
        logp[q] = std::log(prior[q]);
        for (size_t j = 0; j < agents; ++j) {
          logp[q] += std::log(confusion[j][q][label_id[votes[i][j]]]);
        }
      }
      double mx = *std::max_element(logp.begin(), logp.end());
      double z = 0.0;
      for (size_t q = 0; q < L; ++q) z += std::exp(logp[q] - mx);
      for (size_t q = 0; q < L; ++q) {
        double updated = std::exp(logp[q] - mx) / z;
        max_delta = std::max(max_delta, std::fabs(updated - post[i][q]));
        post[i][q] = updated;
      }
    }
    result.iterations = iter + 1;
    if (max_delta < tol) {
      result.converged = true;
      break;
    }
  }

  result.labels.resize(n);
  for (size_t i = 0; i < n; ++i) {
    size_t best = 0;
    for (size_t q = 1; q < L; ++q) {
      if (post[i][q] > post[i][best]) best = q;
    }
    result.labels[i] = labels[best];
  }
  return result;
}

int borda_from_pairwise(const std::vector<std::vector<bool>>& wins,
                        const std::vector<double>& qualities) {
  const size_t n = wins.size();
  if (n == 0) throw Error(ErrorCode::kEmptyInput, "empty pairwise matrix");
  std::vector<int> score(n, 0);
  for (size_t i = 0; i < n; ++i) {
    if (wins[i].size() != n)
      throw Error(ErrorCode::kLengthMismatch, "pairwise matrix must be square");
    for (size_t j = 0; j < n; ++j) {
      if (i != j && wins[i][j]) ++score[i];
    }
  }
  size_t best = 0;
  for (size_t i = 1; i < n; ++i) {
    if (score[i] > score[best]) {
      best = i;
    } else if (score[i] == score[best] && !qualities.empty() &&
               qualities[i] > qualities[best]) {
      best = i;
    }
  }
  return static_cast<int>(best);
}

WelchT welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2)
    throw Error(ErrorCode::kEmptyInput, "welch t needs >= 2 samples per group");
  auto mean_var = [](const std::vector<double>& v) {
    double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    s2 /= (v.size() - 1);
    return std::pair<double, double>(m, s2);
  };
  auto [ma, va] = mean_var(a);
  auto [mb, vb] = mean_var(b);
  double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  double se2 = va / na + vb / nb;
  WelchT w;
  if (se2 == 0.0) {
    w.t = ma == mb ? 0.0 : (ma > mb ? 1e12 : -1e12);
    w.df = na + nb - 2;
    w.p = ma == mb ? 1.0 : 0.0;
    return w;
  }
  w.t = (ma - mb) / std::sqrt(se2);
  double num = se2 * se2;
  double den = (va / na) * (va / na) / (na - 1) + (vb / nb) * (vb / nb) / (nb - 1);
  w.df = num / den;
  w.p = student_t_two_sided_p(w.t, w.df);
  return w;
}

FlipAnalysis flip_analysis(const std::vector<FlipInput>& items) {
  FlipAnalysis out;
  std::vector<double> dt_beneficial, dt_harmful, dt_noflip;
  for (const auto& it : items) {
    if (it.vote_correct && it.synth_correct) ++out.contingency.cc;
    if (it.vote_correct && !it.synth_correct) ++out.contingency.cw;
    if (!it.vote_correct && it.synth_correct) ++out.contingency.wc;
    if (!it.vote_correct && !it.synth_correct) ++out.contingency.ww;

    bool beneficial = !it.vote_correct && it.synth_correct;
    bool harmful = it.vote_correct && !it.synth_correct;
    if (beneficial) out.beneficial.push_back(it.problem_id);
    if (harmful) out.harmful.push_back(it.problem_id);
    if (!it.trace_diversity) continue;  // degenerate D_t excluded from strata
    if (beneficial) {
      dt_beneficial.push_back(*it.trace_diversity);
    } else if (harmful) {
      dt_harmful.push_back(*it.trace_diversity);
    } else {
      dt_noflip.push_back(*it.trace_diversity);
    }
  }

  auto stratum = [](const std::string& name, const std::vector<double>& v) {
    FlipStratum s;
    s.name = name;
    s.count = static_cast<int64_t>(v.size());
    if (!v.empty()) {
      s.mean_dt = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double s2 = 0.0;
      for (double x : v) s2 += (x - s.mean_dt) * (x - s.mean_dt);
      s.std_dt = v.size() > 1 ? std::sqrt(s2 / (v.size() - 1)) : 0.0;
    }
    return s;
  };
  out.strata.push_back(stratum("beneficial", dt_beneficial));
  out.strata.push_back(stratum("harmful", dt_harmful));
  out.strata.push_back(stratum("no_flip", dt_noflip));
  if (dt_beneficial.size() >= 2 && dt_noflip.size() >= 2) {
    out.beneficial_vs_noflip = welch_t_test(dt_beneficial, dt_noflip);
  }
  return out;
}

}  // namespace scmoa
