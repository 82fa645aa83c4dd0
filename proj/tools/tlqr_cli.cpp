// Command-line front end. Coefficient indices are 1-based here and 0-based in
// the library. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <tlqr/tlqr.hpp>

namespace {

using namespace tlqr;

struct usage_error : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

MultiSourceData load_domains(const std::string& target,
                             const std::vector<std::string>& sources)
{
  DomainDataset t = load_dataset_csv(target, 0);
  std::vector<DomainDataset> src;
  for (std::size_t k = 0; k < sources.size(); ++k)
    src.push_back(load_dataset_csv(sources[k], static_cast<int>(k) + 1));
  return MultiSourceData(std::move(t), std::move(src));
}

void write_or_print(const std::string& path, const std::string& content)
{
  if (path.empty() || path == "-")
    std::cout << content;
  else
    write_file(path, content);
}

IndexSet parse_set(const std::string& s, int K)
{
  std::vector<int> v;
  if (trim(s).empty())
    return IndexSet{};
  for (const auto& x : detail::split_list(s)) {
    double d;
    if (!parse_double(x, d) || d != static_cast<int>(d))
      throw usage_error("'" + x + "' is not a source index");
    if (d < 1 || d > K)
      throw usage_error("source index " + x + " outside [1, " + std::to_string(K) + "]");
    v.push_back(static_cast<int>(d));
  }
  return IndexSet(std::move(v));
}

std::string fmt_g(double x)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{ "Sparse quantile regression that borrows strength from source datasets" };
  app.require_subcommand(1);
  // -h is left free so that --h can name the source distance, as in configs.
  app.set_help_flag("--help", "Print this help message and exit");

  // simulate
  SimDesign design;
  std::string sim_dir;
  bool homogeneous = false;
  std::string family = "normal";
  auto* sim = app.add_subcommand("simulate", "Write one simulated scenario as CSV files");
  sim->add_option("--p", design.p, "Number of covariates")->capture_default_str();
  sim->add_option("--n0", design.n0, "Target sample size")->capture_default_str();
  sim->add_option("--nk", design.nk, "Sample size per source")->capture_default_str();
  sim->add_option("--K", design.K, "Number of sources")->capture_default_str();
  sim->add_option("--h", design.h, "l1 distance of transferable sources")->capture_default_str();
  sim->add_option("--s0", design.s0, "Target sparsity")->capture_default_str();
  sim->add_option("--num-transferable", design.num_transferable,
                  "Sources 1..T are transferable")->capture_default_str();
  sim->add_option("--tau", design.tau, "Quantile level")->capture_default_str();
  sim->add_option("--errors", family, "normal, cauchy or gumbel")->capture_default_str();
  sim->add_flag("--homogeneous", homogeneous, "Constant error scale");
  sim->add_option("--seed", design.seed, "Random seed")->capture_default_str();
  sim->add_option("--out-dir", sim_dir, "Output directory")->required();

  // Shared data options.
  std::string target_path, out_path;
  std::vector<std::string> source_paths;
  double tau = 0.5;
  std::optional<double> lambda, lambda_beta, lambda_delta;
  std::string set_text;
  bool set_given = false;
  int cv_folds = 5;
  std::uint64_t cv_seed = 0;
  auto add_data = [&](CLI::App* c, bool with_sources) {
    c->add_option("--target", target_path, "Target dataset CSV (y,z1..zp)")->required();
    if (with_sources)
      c->add_option("--source", source_paths, "Source dataset CSV, repeatable")->required();
    c->add_option("--tau", tau, "Quantile level")->capture_default_str();
    c->add_option("--cv-folds", cv_folds, "Cross-validation folds")->capture_default_str();
    c->add_option("--cv-seed", cv_seed, "Fold assignment seed")->capture_default_str();
  };

  auto* fit = app.add_subcommand("fit", "Penalized quantile regression on one dataset");
  add_data(fit, false);
  fit->add_option("--lambda", lambda, "Penalty level (default: cross-validated)");
  fit->add_option("--out", out_path, "Coefficient CSV (default: stdout)");

  auto* tr = app.add_subcommand("transfer", "Two-step transfer estimate for a given source set");
  add_data(tr, true);
  auto* tr_set = tr->add_option("--transfer-set", set_text,
                                "Comma-separated 1-based sources (default: all)");
  tr->add_option("--lambda-beta", lambda_beta, "Pooled penalty (default: CV)");
  tr->add_option("--lambda-delta", lambda_delta, "Correction penalty (default: CV)");
  tr->add_option("--out", out_path, "Coefficient CSV (default: stdout)");

  int coord = 1;
  double alpha = 0.025;
  std::optional<double> bandwidth;
  auto* inf = app.add_subcommand("infer", "Confidence interval for one coefficient");
  add_data(inf, true);
  auto* inf_set = inf->add_option("--transfer-set", set_text,
                                  "Comma-separated 1-based sources (default: all)");
  inf->add_option("--coord", coord, "1-based coefficient index")->capture_default_str();
  inf->add_option("--alpha", alpha, "One-sided level; 0.025 gives a 95% interval")
    ->capture_default_str();
  inf->add_option("--bandwidth", bandwidth, "Fixed kernel bandwidth (default: Powell rule)");

  double epsilon0 = 0.01;
  std::uint64_t split_seed = 0;
  auto* det = app.add_subcommand("detect", "Select transferable sources and fit");
  add_data(det, true);
  det->add_option("--epsilon0", epsilon0, "Loss tolerance")->capture_default_str();
  det->add_option("--split-seed", split_seed, "Target split seed")->capture_default_str();
  det->add_option("--out", out_path, "Coefficient CSV of the final fit (default: none)");

  std::string config_path, group_by = "none";
  std::vector<std::string> overrides;
  auto* exp = app.add_subcommand("experiment", "Run a Monte-Carlo comparison");
  exp->add_option("--config", config_path, "key=value configuration file")->required();
  exp->add_option("--set", overrides, "Override key=value, repeatable");
  exp->add_option("--group-by", group_by, "SVG panels: none, tau or h")->capture_default_str();

  std::string results_path;
  auto* plot = app.add_subcommand("plot", "Chart a results CSV");
  plot->add_option("--results", results_path, "Results CSV")->required();
  plot->add_option("--out", out_path, "SVG path")->required();
  plot->add_option("--group-by", group_by, "Panels: none, tau or h")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  set_given = tr_set->count() > 0 || inf_set->count() > 0;

  try {
    TransferConfig tc;
    tc.cv_folds = cv_folds;
    tc.cv_seed = cv_seed;

    if (*sim) {
      try {
        design.error_family = parse_error_family(family);
      } catch (const invalid_input& e) {
        throw usage_error(e.what());
      }
      design.heterogeneous = !homogeneous;
      const Scenario sc = gen_scenario(design);
      std::filesystem::create_directories(sim_dir);
      const std::filesystem::path dir(sim_dir);
      write_dataset_csv(sc.data.target(), (dir / "target.csv").string());
      for (int k = 1; k <= sc.data.K(); ++k)
        write_dataset_csv(sc.data.domain(k),
                          (dir / ("source_" + std::to_string(k) + ".csv")).string());
      write_file((dir / "beta0.csv").string(), coefficients_csv(sc.beta0));
      std::string truth = "transferable";
      for (int k : sc.transferable)
        truth += "," + std::to_string(k);
      write_file((dir / "transferable.txt").string(), truth + "\n");
      std::cout << "wrote target and " << sc.data.K() << " sources to " << sim_dir
                << "; transferable = " << sc.transferable.to_string() << "\n";
      return 0;
    }

    if (*fit) {
      const MultiSourceData data = load_domains(target_path, {});
      const PenalizedFit f =
        transfer_step(data, IndexSet{}, QuantileLevel(tau), lambda, tc);
      std::cerr << "lambda=" << fmt_g(f.lambda) << " objective=" << fmt_g(f.objective)
                << " kkt=" << fmt_g(f.kkt_residual) << " status=" << f.status << "\n";
      write_or_print(out_path, coefficients_csv(f.beta));
      return 0;
    }

    if (*tr) {
      const MultiSourceData data = load_domains(target_path, source_paths);
      const IndexSet set =
        set_given ? parse_set(set_text, data.K()) : IndexSet::range(1, data.K() + 1);
      const TransferEstimate est = oracle_transfer(data, set, QuantileLevel(tau),
                                                   lambda_beta, lambda_delta, tc);
      std::cerr << "transfer_set=" << set.to_string()
                << " lambda_beta=" << fmt_g(est.lambda_beta)
                << " lambda_delta=" << fmt_g(est.lambda_delta) << "\n";
      write_or_print(out_path, coefficients_csv(est.beta_target));
      return 0;
    }

    if (*inf) {
      const MultiSourceData data = load_domains(target_path, source_paths);
      const IndexSet set =
        set_given ? parse_set(set_text, data.K()) : IndexSet::range(1, data.K() + 1);
      if (coord < 1 || coord > data.p())
        throw usage_error("--coord must lie in [1, " + std::to_string(data.p()) + "]");
      InferenceConfig ic;
      ic.transfer = tc;
      ic.cv_folds = cv_folds;
      ic.cv_seed = cv_seed;
      if (bandwidth) {
        ic.bandwidth.mode = BandwidthPolicy::Mode::fixed;
        ic.bandwidth.fixed_value = *bandwidth;
      }
      const InferenceReport rep =
        infer_coordinate(data, set, QuantileLevel(tau), coord - 1, alpha, ic);
      for (const auto& w : rep.warnings)
        std::cerr << "warning: " << w << "\n";
      const InferenceResult& r = rep.result;
      const double se =
        r.sigma / (std::abs(r.h_cond) * std::sqrt(static_cast<double>(data.target().n())));
      std::cout << "coord,beta_hat,beta_tilde,std_error,ci_low,ci_high\n"
                << coord << "," << fmt_g(rep.estimate.beta_target(coord - 1)) << ","
                << fmt_g(r.beta_tilde) << "," << fmt_g(se) << "," << fmt_g(r.ci_low)
                << "," << fmt_g(r.ci_high) << "\n";
      return 0;
    }

    if (*det) {
      const MultiSourceData data = load_domains(target_path, source_paths);
      DetectionConfig dc;
      dc.epsilon0 = epsilon0;
      dc.split_seed = split_seed;
      dc.transfer = tc;
      const DetectionResult res = detect(data, QuantileLevel(tau), dc);
      std::cout << "source,validation_loss,selected\n"
                << "0," << fmt_g(res.baseline_loss) << ",baseline\n";
      for (int k = 1; k <= data.K(); ++k)
        std::cout << k << ","
                  << fmt_g(res.source_losses[static_cast<std::size_t>(k - 1)]) << ","
                  << (res.selected.contains(k) ? "yes" : "no") << "\n";
      if (!out_path.empty())
        write_or_print(out_path, coefficients_csv(res.final_estimate.beta_target));
      return 0;
    }

    if (*exp) {
      ExperimentConfig cfg;
      try {
        cfg = load_config(config_path, overrides);
      } catch (const parse_error& e) {
        throw usage_error(e.what());
      }
      if (group_by != "none" && group_by != "tau" && group_by != "h")
        throw usage_error("--group-by must be none, tau or h");
      std::filesystem::create_directories(cfg.output_dir);
      const auto rows = run_experiment(cfg);
      const std::filesystem::path dir(cfg.output_dir);
      emit_csv(rows, (dir / "results.csv").string());
      emit_svg_plot(rows, group_by, (dir / "results.svg").string());
      int failed = 0;
      for (const auto& r : rows)
        if (!r.error.empty()) {
          ++failed;
          std::cerr << r.method << " replication " << r.replication
                    << " failed: " << r.error << "\n";
        }
      std::cout << "wrote " << rows.size() << " rows (" << failed << " failed) to "
                << cfg.output_dir << "\n";
      return 0;
    }

    if (*plot) {
      if (group_by != "none" && group_by != "tau" && group_by != "h")
        throw usage_error("--group-by must be none, tau or h");
      const auto rows = parse_results_csv(read_file(results_path), results_path);
      emit_svg_plot(rows, group_by, out_path);
      return 0;
    }
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
