// Batch CLI wiring the testbeds, the dynamic-basis reduction and the
// baselines into reproducible experiments.
//
// Subcommands:
//   generate  <advection|ks>  --config cfg.json --out DIR
//   reduce    SERIES_DIR      --config cfg.json --out DIR
//   baseline  <pod|dmd|pcm>   SERIES_DIR --config cfg.json --out DIR
//   compare   --spec spec.json --out DIR
//
// Exit codes: 0 success, 2 config validation, 3 data error, 4 numerical.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <dbr/dbr.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json load_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw dbr::DataError("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw dbr::ConfigError("JSON parse error in " + path.string() + ": " +
                           e.what());
  }
  return j;
}

// Every run archives its resolved config next to the outputs.
void archive_config(const json& cfg, const fs::path& out_dir,
                    const std::string& name) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / name);
  json wrapped = cfg;
  wrapped["format_version"] = 1;
  out << wrapped.dump(1) << "\n";
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw dbr::ConfigError("config field '" + key + "': " + e.what());
  }
}

dbr::SamplingSpec parse_sampling(const json& j) {
  dbr::SamplingSpec spec;
  const std::string mode = get_or<std::string>(j, "mode", "collocation");
  if (mode == "collocation") {
    spec.mode = dbr::SamplingSpec::Mode::Collocation;
    spec.Q = get_or<int>(j, "Q", 5);
  } else if (mode == "monte_carlo") {
    spec.mode = dbr::SamplingSpec::Mode::MonteCarlo;
    spec.s = get_or<Eigen::Index>(j, "s", 1000);
    spec.seed = get_or<std::uint64_t>(j, "seed", 0);
  } else {
    throw dbr::ConfigError("sampling mode must be collocation or monte_carlo");
  }
  return spec;
}

int cmd_generate(const std::string& kind, const fs::path& config_path,
                 const fs::path& out_dir) {
  const json cfg = load_json(config_path);
  if (kind == "advection") {
    dbr::AdvectionConfig acfg;
    acfg.vbar = get_or<double>(cfg, "vbar", acfg.vbar);
    acfg.sigma = get_or<double>(cfg, "sigma", acfg.sigma);
    acfg.n = get_or<Eigen::Index>(cfg, "n", acfg.n);
    acfg.s = get_or<Eigen::Index>(cfg, "s", acfg.s);
    acfg.dt = get_or<double>(cfg, "dt", acfg.dt);
    acfg.Tf = get_or<double>(cfg, "Tf", acfg.Tf);
    acfg.numerical_solve =
        get_or<bool>(cfg, "numerical_solve", acfg.numerical_solve);
    acfg.validate();
    const dbr::SnapshotSeries series = dbr::generate_advection_series(acfg);
    dbr::write_series(series, out_dir);
  } else if (kind == "ks") {
    dbr::KsConfig kcfg;
    kcfg.eps = get_or<double>(cfg, "eps", kcfg.eps);
    kcfg.n = get_or<Eigen::Index>(cfg, "n", kcfg.n);
    kcfg.lc = get_or<double>(cfg, "lc", kcfg.lc);
    kcfg.sigma = get_or<double>(cfg, "sigma", kcfg.sigma);
    kcfg.energy_threshold =
        get_or<double>(cfg, "energy_threshold", kcfg.energy_threshold);
    kcfg.dt = get_or<double>(cfg, "dt", kcfg.dt);
    kcfg.Tf = get_or<double>(cfg, "Tf", kcfg.Tf);
    kcfg.burn_in = get_or<double>(cfg, "burn_in", kcfg.burn_in);
    kcfg.burn_dt = get_or<double>(cfg, "burn_dt", kcfg.burn_dt);
    kcfg.substeps = get_or<Eigen::Index>(cfg, "substeps", kcfg.substeps);
    kcfg.seed_amplitude =
        get_or<double>(cfg, "seed_amplitude", kcfg.seed_amplitude);
    if (cfg.contains("sampling")) kcfg.sampling = parse_sampling(cfg["sampling"]);
    kcfg.validate();
    const dbr::KsSeries ks = dbr::generate_ks_series(kcfg);
    dbr::write_series(ks.series, out_dir);
    json summary;
    summary["kl_dimension"] = ks.kl.d;
    summary["kl_eigenvalues"] =
        std::vector<double>(ks.kl.lambda.begin(), ks.kl.lambda.end());
    summary["samples"] = ks.series.s;
    std::ofstream(out_dir / "generate_summary.json") << summary.dump(1) << "\n";
  } else {
    throw dbr::ConfigError("unknown testbed kind: " + kind);
  }
  archive_config(cfg, out_dir, "generate_config.json");
  return 0;
}

int cmd_reduce(const fs::path& series_dir, const fs::path& config_path,
               const fs::path& out_dir) {
  const json cfg = load_json(config_path);
  dbr::ReductionOptions opt;
  opt.r = get_or<Eigen::Index>(cfg, "r", 2);
  if (opt.r < 1) throw dbr::ConfigError("reduce: r must be >= 1");
  opt.derivative_scheme = dbr::derivative_scheme_from_string(
      get_or<std::string>(cfg, "derivative_scheme", "FD4"));
  opt.integrator = dbr::integrator_scheme_from_string(
      get_or<std::string>(cfg, "integrator", "RK4"));
  opt.rel_threshold = get_or<double>(cfg, "rel_threshold", 1e-10);
  const Eigen::Index dump_cadence =
      get_or<Eigen::Index>(cfg, "dump_cadence", 0);
  const Eigen::Index recon_sample =
      get_or<Eigen::Index>(cfg, "reconstruct_sample", -1);

  const dbr::SnapshotSeries series =
      dbr::read_series(series_dir / "manifest.json");
  fs::create_directories(out_dir);

  Eigen::Index dump_counter = 0;
  if (dump_cadence > 0) fs::create_directories(out_dir / "states");
  opt.observer = [&](const dbr::ReductionState& st) {
    if (dump_cadence > 0 && dump_counter % dump_cadence == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "U_%06lld.dbsn",
                    (long long)dump_counter);
      dbr::detail::write_snapshot_file(out_dir / "states" / name, st.U);
      std::snprintf(name, sizeof(name), "Y_%06lld.dbsn",
                    (long long)dump_counter);
      dbr::detail::write_snapshot_file(out_dir / "states" / name, st.Y);
    }
    ++dump_counter;
  };

  // optional reconstruction error at one sample column (mean added back)
  double recon_sq = 0.0;
  Eigen::Index recon_k = 0;
  std::function<void(const dbr::ReductionState&)> base_observer =
      opt.observer;
  if (recon_sample >= 0) {
    if (recon_sample >= series.s)
      throw dbr::ConfigError("reconstruct_sample out of range");
    opt.observer = [&, base_observer](const dbr::ReductionState& st) {
      base_observer(st);
      const dbr::Matrix raw = series.store->load(recon_k);
      auto [centered, mean] = dbr::subtract_mean(raw, series.wxi);
      const dbr::Vector rec =
          mean + st.U * st.Y.row(recon_sample).transpose();
      recon_sq += (raw.col(recon_sample) - rec).squaredNorm();
      ++recon_k;
    };
  }

  const dbr::ReductionResult result = dbr::run_reduction(series, opt);

  std::ofstream csv(out_dir / "metrics.csv");
  csv << "t";
  for (Eigen::Index i = 1; i <= opt.r; ++i) csv << ",lambda_" << i;
  csv << ",sigma_total,error,ortho_defect\n";
  for (size_t k = 0; k < result.trace.t.size(); ++k) {
    csv << fmt(result.trace.t[k]);
    for (Eigen::Index i = 0; i < opt.r; ++i)
      csv << "," << fmt(result.trace.lambda[k][i]);
    csv << "," << fmt(result.trace.sigma_total[k]) << ","
        << fmt(result.trace.error[k]) << ","
        << fmt(result.trace.ortho_defect[k]) << "\n";
  }
  dbr::detail::write_snapshot_file(out_dir / "U_final.dbsn",
                                   result.final_state.U);
  dbr::detail::write_snapshot_file(out_dir / "Y_final.dbsn",
                                   result.final_state.Y);

  json summary;
  summary["steps"] = result.trace.t.size() - 1;
  summary["peak_resident_snapshots"] = result.peak_resident_snapshots;
  if (recon_sample >= 0) {
    const double eps = std::sqrt(recon_sq / double(recon_k - 1));
    summary["reconstruction_error"] = eps;
    std::ofstream rcsv(out_dir / "reconstruction_error.csv");
    rcsv << "r,error\n" << opt.r << "," << fmt(eps) << "\n";
  }
  std::ofstream(out_dir / "reduce_summary.json") << summary.dump(1) << "\n";
  archive_config(cfg, out_dir, "reduce_config.json");
  return 0;
}

int cmd_baseline(const std::string& kind, const fs::path& series_dir,
                 const fs::path& config_path, const fs::path& out_dir) {
  const json cfg = load_json(config_path);
  const dbr::SnapshotSeries series =
      dbr::read_series(series_dir / "manifest.json");
  fs::create_directories(out_dir);

  if (kind == "pod") {
    const auto r = get_or<Eigen::Index>(cfg, "r", 20);
    if (r < 1) throw dbr::ConfigError("pod: r must be >= 1");
    const auto budget =
        get_or<size_t>(cfg, "memory_budget_bytes", size_t(2) << 30);
    const dbr::PodBasis basis = dbr::pod_fit(series, r, budget);
    const std::vector<double> errors = dbr::pod_error(basis, series);
    std::ofstream csv(out_dir / "pod_error.csv");
    csv << "t,error\n";
    for (size_t k = 0; k < errors.size(); ++k)
      csv << fmt(series.times[k]) << "," << fmt(errors[k]) << "\n";
    json summary;
    summary["r"] = r;
    summary["singular_values"] = std::vector<double>(
        basis.singular_values.begin(), basis.singular_values.end());
    std::ofstream(out_dir / "baseline_summary.json") << summary.dump(1) << "\n";
  } else if (kind == "dmd") {
    const auto sample = get_or<Eigen::Index>(cfg, "sample_index", 0);
    if (sample < 0 || sample >= series.s)
      throw dbr::ConfigError("dmd: sample_index out of range");
    const double threshold = get_or<double>(cfg, "energy_threshold", 0.99);
    auto r_keep = get_or<std::vector<Eigen::Index>>(cfg, "r_keep", {});

    // one realization across time, temporal mean subtracted for the fit
    const Eigen::Index K1 = series.num_snapshots();
    dbr::Matrix traj(series.n, K1);
    for (Eigen::Index k = 0; k < K1; ++k)
      traj.col(k) = series.store->load(k).col(sample);
    const dbr::Vector tmean = traj.rowwise().mean();
    dbr::Matrix centered = traj.colwise() - tmean;

    const dbr::DmdModel model = dbr::dmd_fit(centered, series.dt, threshold);
    if (r_keep.empty()) r_keep = {model.rank};
    std::ofstream csv(out_dir / "dmd_error.csv");
    csv << "r,error\n";
    for (const Eigen::Index r : r_keep) {
      if (r > model.rank)
        throw dbr::ConfigError("dmd: r_keep exceeds model rank " +
                               std::to_string(model.rank));
      double sq = 0.0;
      for (Eigen::Index k = 0; k < K1; ++k) {
        const dbr::Vector rec =
            tmean + dbr::dmd_reconstruct(model, series.times[k], r);
        sq += (traj.col(k) - rec).squaredNorm();
      }
      csv << r << "," << fmt(std::sqrt(sq / double(K1 - 1))) << "\n";
    }
    json summary;
    summary["rank"] = model.rank;
    summary["sample_index"] = sample;
    std::vector<double> om_re, om_im;
    for (Eigen::Index i = 0; i < model.rank; ++i) {
      om_re.push_back(model.omega[i].real());
      om_im.push_back(model.omega[i].imag());
    }
    summary["omega_re"] = om_re;
    summary["omega_im"] = om_im;
    std::ofstream(out_dir / "baseline_summary.json") << summary.dump(1) << "\n";
  } else if (kind == "pcm") {
    const int order = get_or<int>(cfg, "order", 20);
    // sample nodes must match the series' quadrature weights; the
    // advection generator stores Gauss-Legendre nodes in sample order
    const dbr::GaussLegendre gl = dbr::gauss_legendre(int(series.s));
    if ((gl.prob_weights - series.wxi.w).cwiseAbs().maxCoeff() > 1e-10)
      throw dbr::DataError(
          "pcm: series sample weights are not Gauss-Legendre collocation "
          "weights");
    std::ofstream csv(out_dir / "pcm_variance.csv");
    csv << "t,variance\n";
    for (Eigen::Index k = 0; k < series.num_snapshots(); ++k) {
      const auto [T, mean] =
          dbr::subtract_mean(series.store->load(k), series.wxi);
      const dbr::PcmExpansion exp =
          dbr::pcm_fit(T, gl.nodes, series.wxi, order);
      csv << fmt(series.times[k]) << ","
          << fmt(dbr::pcm_total_variance(exp, series.wx)) << "\n";
    }
    json summary;
    summary["order"] = order;
    std::ofstream(out_dir / "baseline_summary.json") << summary.dump(1) << "\n";
  } else {
    throw dbr::ConfigError("unknown baseline kind: " + kind);
  }
  archive_config(cfg, out_dir, "baseline_config.json");
  return 0;
}

// Merge value columns from several run CSVs on a shared key column.
int cmd_compare(const fs::path& spec_path, const fs::path& out_dir) {
  const json spec = load_json(spec_path);
  if (!spec.contains("runs") || !spec["runs"].is_array() ||
      spec["runs"].empty())
    throw dbr::ConfigError("compare: spec must list at least one run");
  const std::string key = get_or<std::string>(spec, "key", "t");

  struct Run {
    std::string name;
    std::vector<double> keys;
    std::vector<double> values;
  };
  std::vector<Run> runs;
  for (const json& jr : spec["runs"]) {
    Run run;
    run.name = jr.at("name").get<std::string>();
    const fs::path csv_path = jr.at("path").get<std::string>();
    const std::string column = jr.at("column").get<std::string>();
    std::ifstream in(csv_path);
    if (!in) throw dbr::DataError("compare: cannot open " + csv_path.string());
    std::string line;
    if (!std::getline(in, line))
      throw dbr::DataError("compare: empty CSV " + csv_path.string());
    std::vector<std::string> headers;
    for (size_t pos = 0; pos <= line.size();) {
      size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      headers.push_back(line.substr(pos, comma - pos));
      pos = comma + 1;
    }
    auto find_col = [&](const std::string& name) {
      for (size_t i = 0; i < headers.size(); ++i)
        if (headers[i] == name) return i;
      throw dbr::DataError("compare: column '" + name + "' not in " +
                           csv_path.string());
    };
    const size_t key_idx = find_col(key);
    const size_t val_idx = find_col(column);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::vector<double> fields;
      for (size_t pos = 0; pos <= line.size();) {
        size_t comma = line.find(',', pos);
        if (comma == std::string::npos) comma = line.size();
        fields.push_back(std::stod(line.substr(pos, comma - pos)));
        pos = comma + 1;
      }
      run.keys.push_back(fields.at(key_idx));
      run.values.push_back(fields.at(val_idx));
    }
    runs.push_back(std::move(run));
  }
  for (size_t i = 1; i < runs.size(); ++i)
    if (runs[i].keys != runs[0].keys)
      throw dbr::DataError("compare: axis mismatch between '" +
                           runs[0].name + "' and '" + runs[i].name + "'");

  fs::create_directories(out_dir);
  std::ofstream csv(out_dir / "comparison.csv");
  csv << key;
  for (const Run& r : runs) csv << "," << r.name;
  if (runs.size() == 2) csv << ",diff_" << runs[0].name << "_" << runs[1].name;
  csv << "\n";
  for (size_t k = 0; k < runs[0].keys.size(); ++k) {
    csv << fmt(runs[0].keys[k]);
    for (const Run& r : runs) csv << "," << fmt(r.values[k]);
    if (runs.size() == 2)
      csv << "," << fmt(runs[0].values[k] - runs[1].values[k]);
    csv << "\n";
  }
  archive_config(spec, out_dir, "compare_spec.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic-basis reduction experiments"};
  app.require_subcommand(1);

  std::string gen_kind, base_kind;
  std::string config_path, out_dir, series_dir, spec_path;

  CLI::App* generate = app.add_subcommand("generate", "generate a testbed series");
  generate->add_option("kind", gen_kind, "advection|ks")->required();
  generate->add_option("--config", config_path, "JSON config")->required();
  generate->add_option("--out", out_dir, "output directory")->required();

  CLI::App* reduce = app.add_subcommand("reduce", "run the dynamic-basis reduction");
  reduce->add_option("series", series_dir, "series directory")->required();
  reduce->add_option("--config", config_path, "JSON config")->required();
  reduce->add_option("--out", out_dir, "output directory")->required();

  CLI::App* baseline = app.add_subcommand("baseline", "run a static-basis baseline");
  baseline->add_option("kind", base_kind, "pod|dmd|pcm")->required();
  baseline->add_option("series", series_dir, "series directory")->required();
  baseline->add_option("--config", config_path, "JSON config")->required();
  baseline->add_option("--out", out_dir, "output directory")->required();

  CLI::App* compare = app.add_subcommand("compare", "merge run outputs");
  compare->add_option("--spec", spec_path, "comparison spec JSON")->required();
  compare->add_option("--out", out_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(gen_kind, config_path, out_dir);
    if (reduce->parsed()) return cmd_reduce(series_dir, config_path, out_dir);
    if (baseline->parsed())
      return cmd_baseline(base_kind, series_dir, config_path, out_dir);
    if (compare->parsed()) return cmd_compare(spec_path, out_dir);
  } catch (const dbr::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const dbr::DimensionError& e) {
    std::cerr << "error: config: " << e.what() << "\n";
    return 2;
  } catch (const dbr::DataError& e) {
    std::cerr << "error: data: " << e.what() << "\n";
    return 3;
  } catch (const dbr::NumericalError& e) {
    std::cerr << "error: numerical: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
