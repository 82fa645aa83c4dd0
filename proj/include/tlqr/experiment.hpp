#pragma once

// Monte-Carlo comparison of target-only, all-source, detected-set and
// true-set transfer estimators over a grid of designs.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "core.hpp"
#include "detection.hpp"
#include "simgen.hpp"
#include "solver.hpp"
#include "transfer.hpp"

namespace tlqr {

enum class Method
{
  non_transfer,
  all_transfer,
  detected,
  oracle_transfer
};

inline const char* to_string(Method m)
{
  switch (m) {
    case Method::non_transfer:
      return "non_transfer";
    case Method::all_transfer:
      return "all_transfer";
    case Method::detected:
      return "detected";
    case Method::oracle_transfer:
      return "oracle_transfer";
  }
  return "?";
}

inline Method parse_method(const std::string& s)
{
  for (Method m : { Method::non_transfer, Method::all_transfer,
                    Method::detected, Method::oracle_transfer })
    if (s == to_string(m))
      return m;
  throw invalid_input("unknown method '" + s + "'");
}

struct ExperimentConfig
{
  SimDesign design; // h, num_transferable and tau are overridden by the lists
  std::vector<double> hs{ 6.0 };
  std::vector<int> num_transferable{ 0, 5, 10, 15, 20 };
  std::vector<double> taus{ 0.5 };
  std::vector<Method> methods{ Method::non_transfer, Method::all_transfer,
                               Method::detected, Method::oracle_transfer };
  int replications = 500;
  std::string output_dir;
  int threads = 1;
  double epsilon0 = 0.01;
  int cv_folds = 5;
  int grid_size = 50;
  bool timing = false;

  void validate() const
  {
    if (replications < 1)
      throw invalid_input("replications must be >= 1");
    if (methods.empty())
      throw invalid_input("at least one method is required");
    if (hs.empty() || num_transferable.empty() || taus.empty())
      throw invalid_input("h, num_transferable and taus need at least one value");
    if (threads < 1)
      throw invalid_input("threads must be >= 1");
    if (!(epsilon0 >= 0.0))
      throw invalid_input("epsilon0 must be non-negative");
    if (cv_folds < 2 || grid_size < 1)
      throw invalid_input("cv_folds must be >= 2 and grid_size >= 1");
    for (double t : taus)
      (void)QuantileLevel(t);
    for (double h : hs)
      if (!(h >= 0.0))
        throw invalid_input("h must be non-negative");
    for (int t : num_transferable)
      if (t < 0 || t > design.K)
        throw invalid_input("num_transferable must lie in [0, K]");
    SimDesign d = design;
    d.num_transferable = 0;
    d.validate();
  }
};

struct ExperimentRow
{
  std::string method;
  double tau = 0.5;
  double h = 0.0;
  int num_transferable = 0;
  int replication = 0; // 1-based
  double l2_error = std::numeric_limits<double>::quiet_NaN(); // NaN: failed
  std::optional<bool> detection_correct;
  std::optional<double> runtime_ms;
  // Kept in memory only.
  IndexSet selected;
  std::string error;
};

//! Seed of replication r (1-based), derived from the experiment seed.
inline std::uint64_t replication_seed(std::uint64_t seed, int r)
{
  std::seed_seq seq{ static_cast<std::uint32_t>(seed),
                     static_cast<std::uint32_t>(seed >> 32),
                     static_cast<std::uint32_t>(r), 0x5eedu };
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

//! All configured methods on one simulated scenario. The scenario depends
//! on the replication only, so designs differing in h or num_transferable
//! share covariates and errors.
inline std::vector<ExperimentRow> run_replication(const ExperimentConfig& cfg,
                                                  double tau, double h,
                                                  int num_transferable, int r)
{
  const std::uint64_t rseed = replication_seed(cfg.design.seed, r);
  SimDesign d = cfg.design;
  d.tau = tau;
  d.h = h;
  d.num_transferable = num_transferable;
  d.seed = rseed;

  TransferConfig tc;
  tc.cv_folds = cfg.cv_folds;
  tc.grid_size = cfg.grid_size;
  tc.cv_seed = rseed ^ 0x9e3779b97f4a7c15ull;

  std::vector<ExperimentRow> rows;
  std::optional<Scenario> sc;
  std::string scenario_error;
  try {
    sc = gen_scenario(d);
  } catch (const std::exception& e) {
    scenario_error = e.what();
  }

  const QuantileLevel q(tau);
  for (Method m : cfg.methods) {
    ExperimentRow row;
    row.method = to_string(m);
    row.tau = tau;
    row.h = h;
    row.num_transferable = num_transferable;
    row.replication = r;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (!sc)
        throw std::runtime_error(scenario_error);
      CoefVector est;
      switch (m) {
        case Method::non_transfer:
          est = transfer_step(sc->data, IndexSet{}, q, std::nullopt, tc).beta;
          break;
        case Method::all_transfer:
          est = oracle_transfer(sc->data, IndexSet::range(1, d.K + 1), q,
                                std::nullopt, std::nullopt, tc)
                  .beta_target;
          break;
        case Method::oracle_transfer:
          est = oracle_transfer(sc->data, sc->transferable, q, std::nullopt,
                                std::nullopt, tc)
                  .beta_target;
          break;
        case Method::detected: {
          DetectionConfig dc;
          dc.epsilon0 = cfg.epsilon0;
          dc.split_seed = rseed ^ 0xd1b54a32d192ed03ull;
          dc.transfer = tc;
          const DetectionResult det = detect(sc->data, q, dc);
          est = det.final_estimate.beta_target;
          row.selected = det.selected;
          row.detection_correct = det.selected == sc->transferable;
          break;
        }
      }
      row.l2_error = (est - sc->beta0).norm();
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    if (cfg.timing)
      row.runtime_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    rows.push_back(std::move(row));
  }
  return rows;
}

//! Rows ordered by method (config order), tau, h, num_transferable and
//! replication, independent of the number of threads.
inline std::vector<ExperimentRow> run_experiment(const ExperimentConfig& cfg)
{
  cfg.validate();
  struct Task
  {
    double tau, h;
    int T, r;
  };
  std::vector<Task> tasks;
  for (double tau : cfg.taus)
    for (double h : cfg.hs)
      for (int T : cfg.num_transferable)
        for (int r = 1; r <= cfg.replications; ++r)
          tasks.push_back({ tau, h, T, r });

  std::vector<std::vector<ExperimentRow>> out(tasks.size());
  std::atomic<std::size_t> next{ 0 };
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
      const Task& t = tasks[i];
      out[i] = run_replication(cfg, t.tau, t.h, t.T, t.r);
    }
  };
  const int nthreads =
    std::min<int>(cfg.threads, static_cast<int>(tasks.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < nthreads; ++t)
      pool.emplace_back(worker);
    for (auto& th : pool)
      th.join();
  }

  std::vector<ExperimentRow> rows;
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi)
    for (std::size_t i = 0; i < tasks.size(); ++i)
      rows.push_back(out[i][mi]);
  return rows;
}

} // namespace tlqr
