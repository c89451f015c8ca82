// goss: subsample, fit and benchmark linear mixed models on grouped data.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "goss/baselines.hpp"
#include "goss/dataset.hpp"
#include "goss/error.hpp"
#include "goss/exec.hpp"
#include "goss/lmm.hpp"
#include "goss/selection.hpp"
#include "goss/serialize.hpp"
#include "goss/simulation.hpp"
#include "goss/version.hpp"

namespace fs = std::filesystem;
using namespace goss;

namespace {

struct DataArgs {
  std::string input;
  std::string group_col = "group";
  std::string response_col = "y";
  std::vector<std::string> covariate_cols;

  void add_to(CLI::App* app, bool required) {
    auto* in = app->add_option("--input", input, "CSV file with a header row");
    if (required) in->required();
    in->check(CLI::ExistingFile);
    app->add_option("--group-col", group_col, "Column holding the group label")->capture_default_str();
    app->add_option("--response-col", response_col, "Column holding the response")->capture_default_str();
    app->add_option("--covariate-cols", covariate_cols, "Covariate columns (default: every other numeric column)")
        ->delimiter(',');
  }

  GroupedDataset load() const { return load_csv(input, CsvSchema{group_col, response_col, covariate_cols}); }

  Json to_json() const {
    return Json{{"input", input},
                {"group_col", group_col},
                {"response_col", response_col},
                {"covariate_cols", covariate_cols}};
  }
};

struct Common {
  int threads = 0;
  std::string out_dir = ".";
};

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError("cli", "cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cli", "cannot write '" + path.string() + "'");
  return out;
}

void write_json(const fs::path& path, const Json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  std::cout << path.string() << '\n';
}

// ---- subsample ------------------------------------------------------------

struct SubsampleArgs {
  DataArgs data;
  std::string method;
  Index n = 0;
  std::uint64_t seed = 0;
  std::string elimination = "auto";
  bool subdata_csv = false;
  std::string trace_path;
};

Json subsample_config(const SubsampleArgs& a, const Common& c) {
  Json j = a.data.to_json();
  j["method"] = a.method;
  j["n"] = a.n;
  j["seed"] = a.seed;
  j["elimination"] = a.elimination;
  j["threads"] = thread_count();
  j["out_dir"] = c.out_dir;
  j["subdata_csv"] = a.subdata_csv;
  if (!a.trace_path.empty()) j["trace"] = a.trace_path;
  return j;
}

StrategySpec strategy(const std::string& method, std::uint64_t seed, const std::string& elimination) {
  StrategySpec spec;
  spec.method = parse_method(method);
  spec.seed = seed;
  spec.oss.elimination = parse_elimination(elimination);
  return spec;
}

int run_subsample(const SubsampleArgs& a, const Common& c) {
  const auto ds = a.data.load();
  auto spec = strategy(a.method, a.seed, a.elimination);
  const auto dir = prepare_out_dir(c.out_dir);

  std::ofstream trace_out;
  if (!a.trace_path.empty()) {
    if (spec.method != Method::kOss && spec.method != Method::kGoss)
      throw DataError("cli", "--trace is only available for oss and goss");
    if (const auto parent = fs::path(a.trace_path).parent_path(); !parent.empty()) prepare_out_dir(parent.string());
    trace_out = open_output(a.trace_path);
    spec.oss.trace = [&trace_out, &ds, &spec](const OssTraceEvent& e) {
      Json j{{"group", spec.method == Method::kGoss ? Json(ds.group(e.group).group_id) : Json(nullptr)},
             {"iteration", e.iteration},
             {"chosen", e.chosen},
             {"loss", e.loss},
             {"quota", e.quota},
             {"alive", e.alive}};
      trace_out << j.dump() << '\n';
    };
  }

  const auto sel = select_subdata(ds, a.n, spec);
  const auto config = subsample_config(a, c);

  Json out = output_envelope("subsample", a.seed, config);
  out["dataset"] = dataset_summary(ds);
  out["n"] = sel.total();
  out["selection"] = selection_to_json(ds, sel);
  write_json(dir / "selection.json", out);

  if (a.subdata_csv) {
    const auto path = dir / "subdata.csv";
    auto csv = open_output(path);
    write_csv_preamble(csv, output_envelope("subsample", a.seed, config));
    write_subdata_csv(csv, ds, sel, a.data.group_col, a.data.response_col);
    std::cout << path.string() << '\n';
  }
  return 0;
}

// ---- fit ------------------------------------------------------------------

struct FitArgs {
  DataArgs data;
  std::string selection_path;
  std::string method;
  Index n = 0;
  std::uint64_t seed = 0;
  std::string elimination = "auto";
  std::optional<double> sigma_a2;
  std::optional<double> sigma_e2;
};

int run_fit(const FitArgs& a, const Common& c) {
  if (a.sigma_a2.has_value() != a.sigma_e2.has_value())
    throw CLI::ValidationError("--sigma-a2 and --sigma-e2 must be given together");
  if (a.selection_path.empty() == a.method.empty())
    throw CLI::ValidationError("give exactly one of --selection and --method");
  if (!a.method.empty() && a.n <= 0) throw CLI::ValidationError("--method needs --n");

  const auto ds = a.data.load();
  SubsampleSelection sel;
  if (!a.selection_path.empty()) {
    auto j = read_json_file(a.selection_path);
    // Accept both our own selection files and a bare {group: [rows]} map.
    if (j.is_object() && j.contains("tool") && j.contains("selection")) j = j["selection"];
    sel = selection_from_json(ds, j);
  } else {
    sel = select_subdata(ds, a.n, strategy(a.method, a.seed, a.elimination));
  }

  std::optional<VarianceComponents> known;
  if (a.sigma_a2) {
    if (*a.sigma_a2 < 0.0 || *a.sigma_e2 <= 0.0)
      throw DataError("cli", "variance overrides need sigma_a2 >= 0 and sigma_e2 > 0");
    known = VarianceComponents{*a.sigma_a2, *a.sigma_e2, VarianceSource::kKnown};
  }
  const auto sub = extract_subdata(ds, sel);
  const auto fit = fit_lmm(sub, known, Exec::kParallel);

  Json config = a.data.to_json();
  if (!a.selection_path.empty()) {
    config["selection"] = a.selection_path;
  } else {
    config["method"] = a.method;
    config["n"] = a.n;
    config["elimination"] = a.elimination;
  }
  config["seed"] = a.seed;
  config["sigma_a2"] = a.sigma_a2 ? Json(*a.sigma_a2) : Json(nullptr);
  config["sigma_e2"] = a.sigma_e2 ? Json(*a.sigma_e2) : Json(nullptr);
  config["threads"] = thread_count();
  config["out_dir"] = c.out_dir;

  Json out = output_envelope("fit", a.seed, config);
  out["fit"] = fit_to_json(fit, sub);
  write_json(prepare_out_dir(c.out_dir) / "fit.json", out);
  return 0;
}

// ---- simulate / bench -----------------------------------------------------

struct ExperimentArgs {
  DataArgs data;
  std::string config_path;
  int covariate_case = 1;
  Index groups = 20;
  Index group_size = 1000;
  double multiplier = 2.0;
  Index p = 11;
  double sigma_a2 = 0.5;
  double sigma_e2 = 9.0;
  std::string random_effect = "normal";
  std::string misspec = "none";
  std::vector<Index> sizes;
  std::vector<std::string> methods;
  Index replicates = 100;
  std::uint64_t seed = 1;
  std::string elimination = "auto";
  bool no_full = false;

  std::vector<CLI::Option*> options;
  CLI::Option* opt_case = nullptr;
  CLI::Option* opt_groups = nullptr;
  CLI::Option* opt_group_size = nullptr;
  CLI::Option* opt_multiplier = nullptr;
  CLI::Option* opt_p = nullptr;
  CLI::Option* opt_sigma_a2 = nullptr;
  CLI::Option* opt_sigma_e2 = nullptr;
  CLI::Option* opt_random_effect = nullptr;
  CLI::Option* opt_misspec = nullptr;
  CLI::Option* opt_sizes = nullptr;
  CLI::Option* opt_methods = nullptr;
  CLI::Option* opt_replicates = nullptr;
  CLI::Option* opt_seed = nullptr;
  CLI::Option* opt_elimination = nullptr;

  void add_to(CLI::App* app) {
    data.add_to(app, false);
    app->add_option("--config", config_path, "JSON experiment config; explicit flags override it")
        ->check(CLI::ExistingFile);
    opt_case = app->add_option("--case", covariate_case, "Covariate case 1-4")->check(CLI::Range(1, 4));
    opt_groups = app->add_option("--groups", groups, "Number of groups R");
    opt_group_size = app->add_option("--group-size", group_size, "Size of each group in the first half");
    opt_multiplier = app->add_option("--multiplier", multiplier, "Second-half group size multiplier");
    opt_p = app->add_option("--p", p, "Number of parameters including the intercept");
    opt_sigma_a2 = app->add_option("--sigma-a2", sigma_a2, "Random-intercept variance");
    opt_sigma_e2 = app->add_option("--sigma-e2", sigma_e2, "Error variance");
    opt_random_effect =
        app->add_option("--random-effect", random_effect, "normal or t3")->check(CLI::IsMember({"normal", "t3"}));
    opt_misspec = app->add_option("--misspec", misspec, "none, h1 or h2")->check(CLI::IsMember({"none", "h1", "h2"}));
    opt_sizes = app->add_option("--n", sizes, "Subdata sizes")->delimiter(',');
    opt_methods = app->add_option("--method", methods, "Methods to compare")->delimiter(',');
    opt_replicates = app->add_option("--replicates,-B", replicates, "Replicates (repeats for bench)");
    opt_seed = app->add_option("--seed", seed, "Root seed");
    opt_elimination = app->add_option("--elimination", elimination, "auto, on or off")
                          ->check(CLI::IsMember({"auto", "on", "off"}));
    app->add_flag("--no-full", no_full, "Skip the full-data fit in each replicate");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_experiment_config(config_path);
    auto set = [](const CLI::Option* o) { return o->count() > 0; };
    if (set(opt_case)) cfg.covariate_case = covariate_case;
    if (set(opt_groups)) cfg.groups = groups;
    if (set(opt_group_size)) cfg.first_half_size = group_size;
    if (set(opt_multiplier)) cfg.second_half_multiplier = multiplier;
    if (set(opt_p)) cfg.p = p;
    if (set(opt_sigma_a2)) cfg.sigma_a2 = sigma_a2;
    if (set(opt_sigma_e2)) cfg.sigma_e2 = sigma_e2;
    if (set(opt_random_effect))
      cfg.random_effect = random_effect == "t3" ? RandomEffectDist::kStudentT3 : RandomEffectDist::kNormal;
    if (set(opt_misspec))
      cfg.misspec = misspec == "h1"   ? Misspecification::kH1
                    : misspec == "h2" ? Misspecification::kH2
                                      : Misspecification::kNone;
    if (set(opt_sizes)) cfg.subdata_sizes = sizes;
    if (set(opt_methods)) {
      cfg.methods.clear();
      for (const auto& m : methods) cfg.methods.push_back(parse_method(m));
    }
    if (set(opt_replicates)) cfg.replicates = replicates;
    if (set(opt_seed)) cfg.seed = seed;
    if (set(opt_elimination)) cfg.elimination = parse_elimination(elimination);
    if (no_full) cfg.compare_to_full = false;
    cfg.validate();
    return cfg;
  }
};

void write_metrics(const fs::path& dir, const std::string& command, const ExperimentConfig& cfg, const Json& config,
                   const MetricsTable& table) {
  const auto envelope = output_envelope(command, cfg.seed, config);
  const auto csv_path = dir / "metrics.csv";
  {
    auto csv = open_output(csv_path);
    write_csv_preamble(csv, envelope);
    csv << table.to_csv();
  }
  std::cout << csv_path.string() << '\n';
  Json out = envelope;
  out["metrics"] = metrics_to_json(table);
  write_json(dir / "metrics.json", out);
}

int run_simulate(const ExperimentArgs& a, const Common& c) {
  const auto cfg = a.resolve();
  const auto dir = prepare_out_dir(c.out_dir);
  Json config = config_to_json(cfg);
  config["threads"] = thread_count();

  if (!a.data.input.empty()) {
    // Real-data mode: every method is scored against the full-data fit.
    const auto ds = a.data.load();
    config["data"] = a.data.to_json();
    const auto table = run_on_dataset(ds, cfg.methods, cfg.subdata_sizes, cfg.replicates, cfg.seed, cfg.elimination,
                                      Exec::kParallel);
    write_metrics(dir, "simulate", cfg, config, table);
  } else {
    write_metrics(dir, "simulate", cfg, config, run_experiment(cfg, Exec::kParallel));
  }
  return 0;
}

int run_bench(const ExperimentArgs& a, const Common& c) {
  auto cfg = a.resolve();
  const auto dir = prepare_out_dir(c.out_dir);
  Json config = config_to_json(cfg);
  config["threads"] = thread_count();

  std::optional<GroupedDataset> real;
  if (!a.data.input.empty()) {
    real = a.data.load();
    config["data"] = a.data.to_json();
  }

  // Repeats run one after another so each timing owns the whole machine.
  std::vector<ReplicateRecord> records;
  Index big_n = 0, p = 0;
  for (Index b = 0; b < cfg.replicates; ++b) {
    const std::uint64_t rep_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(b));
    const GroupedDataset ds = real ? *real : simulate_dataset(cfg, rep_seed);
    big_n = ds.total_rows();
    p = ds.num_params();
    for (Index n : cfg.subdata_sizes) {
      for (Method m : cfg.methods) {
        auto rec = evaluate_method(ds, m, n, mix_seed(rep_seed, static_cast<std::uint64_t>(m)), cfg.elimination,
                                   std::nullopt, Exec::kParallel);
        rec.replicate = b;
        if (!rec.ok) std::cerr << "goss: warning: " << to_string(m) << " failed: " << rec.error << '\n';
        records.push_back(std::move(rec));
      }
    }
  }

  const auto envelope = output_envelope("bench", cfg.seed, config);
  std::ostringstream csv;
  csv << "method,N,p,n,repeats,failed,mean_seconds,stderr_seconds,min_seconds\n";
  Json rows = Json::array();
  for (Index n : cfg.subdata_sizes) {
    for (Method m : cfg.methods) {
      std::vector<double> t;
      Index failed = 0;
      for (const auto& r : records) {
        if (r.method != m || r.n != n) continue;
        if (r.ok) t.push_back(r.seconds);
        else ++failed;
      }
      double mean = 0.0, se = 0.0, lo = 0.0;
      if (!t.empty()) {
        for (double v : t) mean += v;
        mean /= static_cast<double>(t.size());
        if (t.size() > 1) {
          double ss = 0.0;
          for (double v : t) ss += (v - mean) * (v - mean);
          se = std::sqrt(ss / static_cast<double>(t.size() - 1) / static_cast<double>(t.size()));
        }
        lo = *std::min_element(t.begin(), t.end());
      }
      csv << to_string(m) << ',' << big_n << ',' << p << ',' << n << ',' << t.size() << ',' << failed << ',' << mean
          << ',' << se << ',' << lo << '\n';
      rows.push_back(Json{{"method", to_string(m)},
                          {"N", big_n},
                          {"p", p},
                          {"n", n},
                          {"repeats", t.size()},
                          {"failed", failed},
                          {"mean_seconds", mean},
                          {"stderr_seconds", se},
                          {"min_seconds", lo}});
    }
  }
  const auto csv_path = dir / "bench.csv";
  {
    auto out = open_output(csv_path);
    write_csv_preamble(out, envelope);
    out << csv.str();
  }
  std::cout << csv_path.string() << '\n';
  Json out = envelope;
  out["timings"] = std::move(rows);
  write_json(dir / "bench.json", out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group-balanced orthogonal subsampling for linear mixed models"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Common common;
  app.add_option("--threads", common.threads, "Worker threads (default: all cores)");
  app.add_option("--out-dir", common.out_dir, "Directory for output files")->capture_default_str();

  SubsampleArgs sub_args;
  auto* sub = app.add_subcommand("subsample", "Select subdata and write the selection");
  sub_args.data.add_to(sub, true);
  sub->add_option("--method", sub_args.method, "unif, gunif, lev, glev, iboss, giboss, oss or goss")->required();
  sub->add_option("--n", sub_args.n, "Subdata size")->required()->check(CLI::PositiveNumber);
  sub->add_option("--seed", sub_args.seed, "Seed for randomized methods")->capture_default_str();
  sub->add_option("--elimination", sub_args.elimination, "auto, on or off")
      ->check(CLI::IsMember({"auto", "on", "off"}))
      ->capture_default_str();
  sub->add_flag("--subdata-csv", sub_args.subdata_csv, "Also write the selected rows as subdata.csv");
  sub->add_option("--trace", sub_args.trace_path, "Write OSS selector events as JSON lines");

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit the mixed model on subdata");
  fit_args.data.add_to(fit, true);
  fit->add_option("--selection", fit_args.selection_path, "Selection JSON from 'subsample'")->check(CLI::ExistingFile);
  fit->add_option("--method", fit_args.method, "Select inline with this method");
  fit->add_option("--n", fit_args.n, "Subdata size for inline selection");
  fit->add_option("--seed", fit_args.seed, "Seed for randomized methods")->capture_default_str();
  fit->add_option("--elimination", fit_args.elimination, "auto, on or off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  fit->add_option("--sigma-a2", fit_args.sigma_a2, "Known random-intercept variance");
  fit->add_option("--sigma-e2", fit_args.sigma_e2, "Known error variance");

  ExperimentArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Run a simulation study (or score methods on --input)");
  sim_args.add_to(sim);

  ExperimentArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Time each method at fixed N, p and n");
  bench_args.add_to(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    set_thread_count(common.threads);
    if (*sub) return run_subsample(sub_args, common);
    if (*fit) return run_fit(fit_args, common);
    if (*sim) return run_simulate(sim_args, common);
    if (*bench) return run_bench(bench_args, common);
  } catch (const CLI::Error& e) {
    std::cerr << "goss: usage error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kUsage);
  } catch (const Error& e) {
    std::cerr << "goss: error in " << e.what() << '\n';
    return static_cast<int>(e.exit_code());
  } catch (const std::exception& e) {
    std::cerr << "goss: error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kData);
  }
  return static_cast<int>(ExitCode::kUsage);
}
