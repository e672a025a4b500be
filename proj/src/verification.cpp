// Copyright 2026 The extmark Authors
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

#include "extmark/verification.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "extmark/error.hpp"
#include "extmark/rng.hpp"
#include "extmark/stats.hpp"

namespace extmark {

namespace {

nlohmann::json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double number_from(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    throw IoError("bad numeric field '" + s + "'");
  }
  return j.get<double>();
}

}  // namespace

nlohmann::json to_json(const VerificationReport& r) {
  return {{"mu_S", r.mu_s},     {"mu_B", r.mu_b},       {"delta_mu", r.delta_mu},     {"t_stat", number(r.t_stat)},
          {"p_value", r.p_value}, {"m", r.m},           {"alpha", r.alpha},           {"decision", r.decision()},
          {"sample_ids", r.sample_ids}, {"seed", r.seed}};
}

VerificationReport verification_report_from_json(const nlohmann::json& j) {
  VerificationReport r;
  r.mu_s = j.at("mu_S").get<double>();
  r.mu_b = j.at("mu_B").get<double>();
  r.delta_mu = j.at("delta_mu").get<double>();
  r.t_stat = number_from(j.at("t_stat"));
  r.p_value = j.at("p_value").get<double>();
  r.m = j.at("m").get<int>();
  r.alpha = j.at("alpha").get<double>();
  r.stolen = j.at("decision").get<std::string>() == "stolen";
  r.sample_ids = j.at("sample_ids").get<std::vector<std::size_t>>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

std::vector<double> score_pool(const MetaClassifier& meta, const ModelHandle& model, const ImageDataset& pool,
                               SignatureMode mode, const ParameterMask& mask, ScoreKind kind) {
  if (meta.mode() != mode) throw DomainError("meta-classifier was trained on " + to_string(meta.mode()) + " signatures");
  if (meta.input_dim() != mask.size()) throw DomainError("mask size differs from the meta-classifier input");
  auto sigs = extract_signatures(model, pool, mode, mask);
  std::vector<double> out(sigs.size());
  for (std::size_t i = 0; i < sigs.size(); ++i) {
    const double p = meta.posterior(sigs[i]);
    out[i] = kind == ScoreKind::posterior ? p : (p > 0.5 ? 1.0 : 0.0);
  }
  return out;
}

VerificationReport verify_from_scores(std::span<const double> suspect_scores, std::span<const double> benign_scores,
                                      int m, double alpha, std::uint64_t seed) {
  if (m < 2) throw DomainError("verification needs m >= 2");
  if (!(alpha > 0 && alpha < 1)) throw DomainError("alpha must lie in (0, 1)");
  if (suspect_scores.size() != benign_scores.size()) throw DomainError("score vectors differ in length");
  if (suspect_scores.size() < static_cast<std::size_t>(m))
    throw DomainError("pool of " + std::to_string(suspect_scores.size()) + " items is smaller than m = " +
                      std::to_string(m));
  VerificationReport r;
  r.m = m;
  r.alpha = alpha;
  r.seed = seed;
  Rng rng(seed);
  r.sample_ids = rng.sample_without_replacement(suspect_scores.size(), static_cast<std::size_t>(m));
  std::vector<double> s, b;
  for (std::size_t i : r.sample_ids) {
    s.push_back(suspect_scores[i]);
    b.push_back(benign_scores[i]);
  }
  r.mu_s = stats::mean(s);
  r.mu_b = stats::mean(b);
  r.delta_mu = r.mu_s - r.mu_b;
  const auto tt = stats::paired_t_test(s, b);
  r.t_stat = tt.t;
  r.p_value = tt.p;
  r.stolen = r.p_value < alpha;
  return r;
}

VerificationReport verify_ownership(const MetaClassifier& meta, const ModelHandle& suspect, const ModelHandle& benign,
                                    const ImageDataset& pool, int m, double alpha, std::uint64_t seed,
                                    SignatureMode mode, const ParameterMask& mask, ScoreKind kind) {
  if (m < 2) throw DomainError("verification needs m >= 2");
  if (pool.size() < static_cast<std::size_t>(m)) throw DomainError("verification pool is smaller than m");
  // Only the sampled items need signatures.
  Rng rng(seed);
  auto ids = rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(m));
  ImageDataset picked = pool.subset(ids, pool.name() + "+sampled");
  auto ss = score_pool(meta, suspect, picked, mode, mask, kind);
  auto sb = score_pool(meta, benign, picked, mode, mask, kind);
  std::vector<double> full_s(pool.size(), 0.0), full_b(pool.size(), 0.0);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    full_s[ids[i]] = ss[i];
    full_b[ids[i]] = sb[i];
  }
  return verify_from_scores(full_s, full_b, m, alpha, seed);
}

std::vector<SweepRow> sweep_verification(const MetaClassifier& meta, const ModelHandle& suspect,
                                         const ModelHandle& benign, const ImageDataset& pool,
                                         const std::vector<int>& m_values, const std::string& gamma_tag, double alpha,
                                         const std::vector<std::uint64_t>& seeds, SignatureMode mode,
                                         const ParameterMask& mask) {
  for (int m : m_values) {
    if (m < 2) throw DomainError("verification needs m >= 2");
    if (pool.size() < static_cast<std::size_t>(m)) throw DomainError("verification pool is smaller than m");
  }
  auto ss = score_pool(meta, suspect, pool, mode, mask);
  auto sb = score_pool(meta, benign, pool, mode, mask);
  std::vector<SweepRow> rows;
  for (int m : m_values)
    for (std::uint64_t seed : seeds) rows.push_back({m, seed, gamma_tag, verify_from_scores(ss, sb, m, alpha, seed)});
  return rows;
}

std::vector<SweepSummary> summarize_sweep(const std::vector<SweepRow>& rows) {
  std::vector<SweepSummary> out;
  std::vector<int> ms;
  for (const auto& r : rows)
    if (std::find(ms.begin(), ms.end(), r.m) == ms.end()) ms.push_back(r.m);
  for (int m : ms) {
    std::vector<double> p, dm;
    for (const auto& r : rows)
      if (r.m == m) {
        p.push_back(r.report.p_value);
        dm.push_back(r.report.delta_mu);
      }
    out.push_back({m, stats::median(p), stats::median(dm)});
  }
  return out;
}

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

std::string csv_header() { return "suspect_hash,benign_hash,attack_id,m,alpha,mu_S,mu_B,delta_mu,t,p,decision,seed"; }

std::string csv_row(const std::string& suspect_hash, const std::string& benign_hash, const std::string& attack_id,
                    const VerificationReport& r) {
  return suspect_hash + "," + benign_hash + "," + attack_id + "," + std::to_string(r.m) + "," +
         format_number(r.alpha) + "," + format_number(r.mu_s) + "," + format_number(r.mu_b) + "," +
         format_number(r.delta_mu) + "," + format_number(r.t_stat) + "," + format_number(r.p_value) + "," +
         r.decision() + "," + std::to_string(r.seed);
}

void append_csv(const std::filesystem::path& path, const std::string& suspect_hash, const std::string& benign_hash,
                const std::string& attack_id, const VerificationReport& r) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  if (!f) throw IoError("cannot append to " + path.string());
  if (fresh) f << csv_header() << "\n";
  f << csv_row(suspect_hash, benign_hash, attack_id, r) << "\n";
}

}  // namespace extmark
