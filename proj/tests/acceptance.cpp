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
// Acceptance suite: one PASS/FAIL line per criterion.
//
//   extmark_acceptance --cli <extmark binary> --cache <dir> [--only 1,5] [--allow-fail 2]
//
// Models are shared through a content-addressed cache, so criteria that reuse
// the same victim train it once.
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "CLI11.hpp"
#include "extmark/backdoor.hpp"
#include "extmark/harness.hpp"
#include "extmark/stats.hpp"
#include "gradcheck.hpp"

namespace fs = std::filesystem;
using namespace extmark;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, const char* spec = "%.3g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Desk scale: 16x16 synthetic shapes, cnn-small, gamma 10, m 10, alpha 0.01.
ExperimentConfig desk_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.seed = seed;
  c.modes = {SignatureMode::sign, SignatureMode::raw};
  c.attacks = {parse_attack_plan("label_query"), parse_attack_plan("fine_tune")};
  return c;
}

const std::vector<std::uint64_t> kSeeds{1, 2, 3};
constexpr std::uint64_t kVerifySeed = 0;

class Suite {
 public:
  Suite(fs::path cache, fs::path cli) : cache_(std::move(cache)), cli_(std::move(cli)) {}

  Experiment& experiment(std::uint64_t seed, double gamma = 10.0) {
    const std::string key = std::to_string(seed) + "/" + fmt(gamma);
    auto it = experiments_.find(key);
    if (it == experiments_.end()) {
      ExperimentConfig c = desk_config(seed);
      c.gamma = gamma;
      it = experiments_.emplace(key, std::make_unique<Experiment>(c, ArtifactCache(cache_))).first;
    }
    return *it->second;
  }

  const ModelHandle& student(Experiment& ex, const std::string& attack) {
    return ex.stolen(parse_attack_plan(attack)).back();
  }

  Verdict source_detection() {
    bool ok = true;
    std::string d;
    for (auto s : kSeeds) {
      auto& ex = experiment(s);
      auto r = ex.verify(ex.victim(), SignatureMode::sign, kVerifySeed);
      ok = ok && r.delta_mu >= 0.8 && r.p_value <= 1e-3;
      d += " seed" + std::to_string(s) + "(dmu=" + fmt(r.delta_mu) + ",p=" + fmt(r.p_value) + ")";
    }
    return {ok, "need dmu>=0.8 and p<=1e-3 on every seed:" + d};
  }

  Verdict independent_control() {
    bool ok = true;
    std::string d;
    for (auto s : kSeeds) {
      auto& ex = experiment(s);
      auto r = ex.verify(ex.independent(), SignatureMode::sign, kVerifySeed);
      ok = ok && r.p_value >= 0.1 && std::abs(r.delta_mu) <= 0.15;
      d += " seed" + std::to_string(s) + "(dmu=" + fmt(r.delta_mu) + ",p=" + fmt(r.p_value) + ")";
    }
    return {ok, "need p>=0.1 and |dmu|<=0.15 on every seed:" + d};
  }

  Verdict stolen_detection() {
    bool ok = true;
    std::string d;
    for (const char* attack : {"label_query", "fine_tune"}) {
      int hits = 0;
      d += std::string(" ") + attack + "[";
      for (auto s : kSeeds) {
        auto& ex = experiment(s);
        auto r = ex.verify(student(ex, attack), SignatureMode::sign, kVerifySeed);
        hits += r.p_value <= 0.05;
        d += fmt(r.p_value) + (s == kSeeds.back() ? "" : ",");
      }
      d += "] " + std::to_string(hits) + "/3";
      ok = ok && hits >= 2;
    }
    return {ok, "need p<=0.05 in >=2 of 3 seeds, p per seed:" + d};
  }

  Verdict harmlessness() {
    bool ok = true;
    std::string d;
    for (auto s : kSeeds) {
      auto& ex = experiment(s);
      const double v = evaluate_accuracy(ex.victim(), ex.data().test), b = evaluate_accuracy(ex.benign(), ex.data().test);
      ok = ok && std::abs(v - b) <= 0.02;
      d += " seed" + std::to_string(s) + "(V=" + fmt(100 * v, "%.2f") + "%,B=" + fmt(100 * b, "%.2f") + "%)";
    }
    return {ok, "need |acc(V)-acc(B)|<=2 points:" + d};
  }

  Verdict backdoor_failure() {
    auto& ex = experiment(kSeeds.front());
    const BackdoorSpec spec = ex.backdoor_spec();
    const ModelHandle& wm = ex.badnets();
    const double asr = attack_success_rate(wm, spec, ex.data().test);
    const double ba = evaluate_accuracy(wm, ex.data().test);
    const ModelHandle& lq = ex.stolen(parse_attack_plan("label_query"), &wm).back();
    const double lq_asr = attack_success_rate(lq, spec, ex.data().test);
    return {asr >= 0.9 && lq_asr <= 0.2, "BadNets BA=" + fmt(100 * ba, "%.2f") + "% ASR=" + fmt(100 * asr, "%.2f") +
                                             "% (need >=90%); label-query student ASR=" + fmt(100 * lq_asr, "%.2f") +
                                             "% (need <=20%)"};
  }

  Verdict statistical_oracle() {
    Rng rng(424242);
    double worst = 0.0;
    for (int f = 0; f < 100; ++f) {
      const int n = rng.uniform_int(2, 40);
      std::vector<double> s(n), b(n);
      const double shift = rng.uniform(-0.3, 0.6);
      for (int i = 0; i < n; ++i) {
        b[i] = rng.uniform();
        s[i] = b[i] + shift + 0.3 * rng.normal();
      }
      double mean = 0.0, ss = 0.0;
      for (int i = 0; i < n; ++i) mean += (s[i] - b[i]) / n;
      for (int i = 0; i < n; ++i) ss += (s[i] - b[i] - mean) * (s[i] - b[i] - mean);
      const double t = mean / (std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n)));
      const double ref = boost::math::cdf(boost::math::complement(boost::math::students_t(n - 1.0), t));
      worst = std::max(worst, std::abs(stats::paired_t_test(s, b).p - ref));
    }
    const std::vector<double> base{0.25, 0.5, 0.75}, up{0.75, 1.0, 1.25}, down{0.0, 0.25, 0.5};
    const auto pos = stats::paired_t_test(up, base), neg = stats::paired_t_test(down, base),
               same = stats::paired_t_test(base, base);
    const bool degenerate = pos.p == 0.0 && neg.p == 1.0 && same.p == 1.0;
    return {worst <= 1e-9 && degenerate, "max |p - p_ref| over 100 fixtures = " + fmt(worst) +
                                             " (need <=1e-9); degenerate conventions " + (degenerate ? "exact" : "WRONG")};
  }

  Verdict gradient_oracle() {
    bool ok = true;
    std::string d;
    for (const auto& arch : registered_architectures()) {
      ArchOptions o{Shape{3, 8, 8}, 10, 2};
      ModelHandle m = ModelHandle::create(arch, o, 11);
      testing::jitter(m, 12);
      Rng rng(13);
      std::vector<double> px(o.input.size());
      for (auto& v : px) v = rng.uniform();
      auto r = testing::finite_difference_check(m, LabeledImage(o.input, px, 3));
      ok = ok && r.relative_error <= 1e-4;
      d += " " + arch + "=" + fmt(r.relative_error);
    }
    return {ok, "central differences, step 1e-5, need rel. error <=1e-4:" + d};
  }

  Verdict sign_ablation() {
    bool ok = true;
    std::string d;
    for (auto s : kSeeds) {
      auto& ex = experiment(s);
      auto sign = ex.verify(ex.victim(), SignatureMode::sign, kVerifySeed);
      auto raw = ex.verify(ex.victim(), SignatureMode::raw, kVerifySeed);
      ok = ok && sign.delta_mu >= raw.delta_mu - 0.05;
      d += " seed" + std::to_string(s) + "(sign=" + fmt(sign.delta_mu) + ",raw=" + fmt(raw.delta_mu) + ")";
    }
    return {ok, "need dmu(sign) >= dmu(raw)-0.05 on Source:" + d};
  }

  Verdict monotonicity() {
    auto median_p = [&](Experiment& ex, int m) {
      const ModelHandle& lq = student(ex, "label_query");
      std::vector<double> p;
      for (std::uint64_t v = 0; v < 5; ++v) p.push_back(ex.verify(lq, SignatureMode::sign, v, m).p_value);
      return stats::median(p);
    };
    auto& ex10 = experiment(kSeeds.front(), 10.0);
    const double m4 = median_p(ex10, 4), m10 = median_p(ex10, 10), m20 = median_p(ex10, 20);
    auto& ex2 = experiment(kSeeds.front(), 2.0);
    const double g2 = median_p(ex2, 10);
    const bool in_m = m4 >= m10 && m10 >= m20, in_gamma = g2 >= m10;
    return {in_m && in_gamma, "label-query median p over 5 seeds: m=4 " + fmt(m4) + ", m=10 " + fmt(m10) + ", m=20 " +
                                  fmt(m20) + (in_m ? " (non-increasing)" : " (NOT monotone)") + "; gamma=2 " + fmt(g2) +
                                  " vs gamma=10 " + fmt(m10) + (in_gamma ? " (non-increasing)" : " (NOT monotone)")};
  }

  Verdict determinism() {
    const fs::path root = fs::temp_directory_path() / "extmark-acceptance-determinism";
    fs::remove_all(root);
    fs::create_directories(root);
    {
      std::ofstream cfg(root / "run.cfg");
      cfg << "train_size = 800\ntest_size = 200\nsurrogate_size = 800\nepochs = 3\nquery_epochs = 3\n"
             "distill_epochs = 2\nfinetune_epochs = 1\nzs_iterations = 10\n"
             "attacks = distillation, fine_tune, label_query, logit_query, zero_shot\nmodes = sign, raw\n";
    }
    std::vector<std::string> files{"report_sign.csv", "report_raw.csv", "table.csv"};
    std::string blobs[2][3];
    for (int run = 0; run < 2; ++run) {
      const fs::path out = root / ("run" + std::to_string(run));
      const std::string cmd = std::string(ArtifactCache::kEnvVar) + "='" + (out / "cache").string() + "' '" +
                              cli_.string() + "' run --config '" + (root / "run.cfg").string() + "' --out '" +
                              out.string() + "' > '" + (out.string() + ".log") + "' 2>&1";
      if (std::system(cmd.c_str()) != 0) return {false, "run " + std::to_string(run) + " failed: " + cmd};
      for (std::size_t k = 0; k < files.size(); ++k) {
        std::ifstream f(out / files[k], std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        blobs[run][k] = ss.str();
      }
    }
    bool ok = true;
    std::string d;
    for (std::size_t k = 0; k < files.size(); ++k) {
      const bool same = !blobs[0][k].empty() && blobs[0][k] == blobs[1][k];
      ok = ok && same;
      d += " " + files[k] + (same ? " identical" : " DIFFER") + " (" + std::to_string(blobs[0][k].size()) + " bytes)";
    }
    fs::remove_all(root);
    return {ok, "two cold-cache runs of `extmark run`:" + d};
  }

 private:
  fs::path cache_, cli_;
  std::map<std::string, std::unique_ptr<Experiment>> experiments_;
};

std::set<int> parse_ids(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.insert(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"extmark acceptance suite"};
  std::string cli, cache = (fs::temp_directory_path() / "extmark-acceptance-cache").string(), only, allow;
  app.add_option("--cli", cli, "path to the extmark executable")->required();
  app.add_option("--cache", cache, "shared model cache");
  app.add_option("--only", only, "comma-separated criteria to run");
  app.add_option("--allow-fail", allow, "criteria whose FAIL does not fail the exit status");
  CLI11_PARSE(app, argc, argv);

  Suite suite(cache, cli);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"source detection", [&] { return suite.source_detection(); }},
      {"independent control", [&] { return suite.independent_control(); }},
      {"stolen-model detection", [&] { return suite.stolen_detection(); }},
      {"harmlessness", [&] { return suite.harmlessness(); }},
      {"backdoor-baseline failure", [&] { return suite.backdoor_failure(); }},
      {"statistical oracle", [&] { return suite.statistical_oracle(); }},
      {"gradient oracle", [&] { return suite.gradient_oracle(); }},
      {"sign-ablation direction", [&] { return suite.sign_ablation(); }},
      {"monotonicity trends", [&] { return suite.monotonicity(); }},
      {"determinism", [&] { return suite.determinism(); }},
  };
  const std::set<int> selected = parse_ids(only), allowed = parse_ids(allow);
  int passed = 0, run = 0, blocking = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    ++run;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    passed += v.pass;
    if (!v.pass && !allowed.count(id)) ++blocking;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << id << " (" << criteria[i].first << "): " << v.detail
              << (v.pass || !allowed.count(id) ? "" : "  [known limitation, see README]") << std::endl;
  }
  std::cout << passed << "/" << run << " criteria passed" << std::endl;
  return blocking == 0 ? 0 : 1;
}
