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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "extmark/image.hpp"
#include "extmark/model.hpp"
#include "extmark/signatures.hpp"

namespace extmark {

enum class ScoreKind { posterior, hard };

struct VerificationReport {
  double mu_s = 0.0;
  double mu_b = 0.0;
  double delta_mu = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  int m = 0;
  double alpha = 0.01;
  bool stolen = false;
  std::vector<std::size_t> sample_ids;
  std::uint64_t seed = 0;

  std::string decision() const { return stolen ? "stolen" : "not_stolen"; }
};

nlohmann::json to_json(const VerificationReport& r);
VerificationReport verification_report_from_json(const nlohmann::json& j);

// Per-item meta scores of one model over the whole pool.
std::vector<double> score_pool(const MetaClassifier& meta, const ModelHandle& model, const ImageDataset& pool,
                               SignatureMode mode, const ParameterMask& mask, ScoreKind kind = ScoreKind::posterior);

// Draws m pool indices without replacement from Rng(seed) and tests the paired
// scores. Both verify_ownership and sweep_verification go through here.
VerificationReport verify_from_scores(std::span<const double> suspect_scores, std::span<const double> benign_scores,
                                      int m, double alpha, std::uint64_t seed);

VerificationReport verify_ownership(const MetaClassifier& meta, const ModelHandle& suspect, const ModelHandle& benign,
                                    const ImageDataset& pool, int m, double alpha, std::uint64_t seed,
                                    SignatureMode mode, const ParameterMask& mask,
                                    ScoreKind kind = ScoreKind::posterior);

struct SweepRow {
  int m = 0;
  std::uint64_t seed = 0;
  std::string gamma_tag;
  VerificationReport report;
};

struct SweepSummary {
  int m = 0;
  double median_p = 1.0;
  double median_delta_mu = 0.0;
};

std::vector<SweepRow> sweep_verification(const MetaClassifier& meta, const ModelHandle& suspect,
                                         const ModelHandle& benign, const ImageDataset& pool,
                                         const std::vector<int>& m_values, const std::string& gamma_tag, double alpha,
                                         const std::vector<std::uint64_t>& seeds, SignatureMode mode,
                                         const ParameterMask& mask);
// Median p and median delta-mu per m, in the order of first appearance.
std::vector<SweepSummary> summarize_sweep(const std::vector<SweepRow>& rows);

// Batch CSV columns: suspect_hash, benign_hash, attack_id, m, alpha, mu_S,
// mu_B, delta_mu, t, p, decision, seed.
std::string csv_header();
std::string csv_row(const std::string& suspect_hash, const std::string& benign_hash, const std::string& attack_id,
                    const VerificationReport& r);
// Appends one row, writing the header first when the file is new or empty.
void append_csv(const std::filesystem::path& path, const std::string& suspect_hash, const std::string& benign_hash,
                const std::string& attack_id, const VerificationReport& r);

std::string format_number(double v);

}  // namespace extmark
