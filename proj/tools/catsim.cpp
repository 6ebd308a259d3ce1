// catsim command-line front end.
//
//   catsim run    --config FILE [--seed N] [--out DIR]
//   catsim tomo   --records FILE --dim N --loss L --out DIR
//   catsim sample --state SPEC --n N --seed S --out FILE [--loss L]
//
// Exit status: 0 success, 2 bad input (configuration, arguments, record files,
// output paths), 3 numerical failure.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "catsim/scenario.hpp"

namespace {

constexpr int kConfigExit = 2;
constexpr int kNumericalExit = 3;

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, std::string out) {
  catsim::Config cfg = catsim::load_config(config_path);
  if (seed) cfg.seed = *seed;
  if (out.empty()) out = "out/" + cfg.name;
  const catsim::ScenarioReport rep = catsim::run_scenario(cfg, out);
  for (const auto& c : rep.checks)
    std::cout << (c.pass ? "[pass] " : "[FAIL] ") << c.name << ": " << c.value << " (expected " << c.expected
              << ")\n";
  std::cout << rep.files.size() + 1 << " files written to " << out << '\n';
  return 0;
}

int cmd_tomo(const std::string& records, int dim, double loss, const std::string& out_dir) {
  const catsim::MeasurementRun run = catsim::read_records(records);
  catsim::MleOptions o;
  o.dim = dim;
  o.loss_correction_L = loss;
  o.validate();
  const catsim::MleResult r = catsim::mle_rhor(run, o);
  const catsim::UncertaintySummary u = catsim::uncertainty(run, r.rho_hat, o);

  catsim::ScenarioReport rep;
  catsim::detail::OutputDir out(out_dir, rep);
  catsim::GridSpec g;
  out.write("rho_real.csv", [&](std::ostream& os) { catsim::write_matrix_csv(r.rho_hat.matrix().real(), "real", os); });
  out.write("rho_imag.csv", [&](std::ostream& os) { catsim::write_matrix_csv(r.rho_hat.matrix().imag(), "imag", os); });
  out.grid("wigner_mle.csv", catsim::wigner(r.rho_hat, g));
  // filtered back-projection has no loss correction; it always shows the detected state
  out.grid("wigner_radon.csv", catsim::inverse_radon(run, g));

  nlohmann::ordered_json j;
  j["records"] = run.records.size();
  j["seed"] = run.seed;
  j["dim"] = dim;
  j["loss_correction"] = loss;
  j["iterations"] = r.iterations;
  j["converged"] = r.converged;
  j["loglik"] = r.loglik.back();
  j["fixed_point_residual"] = r.fixed_point_residual;
  j["diluted_steps"] = r.diluted_steps;
  j["parity"] = catsim::parity_expectation(r.rho_hat);
  j["w00"] = catsim::wigner_point(r.rho_hat, 0.0, 0.0);
  j["mean_photon_number"] = catsim::mean_photon_number(r.rho_hat);
  j["uncertainty"] = {{"method", u.method},
                      {"parameters", u.parameters},
                      {"sigma_parity", u.sigma_parity},
                      {"sigma_w00", u.sigma_w00},
                      {"sigma_mean_photon_number", u.sigma_mean_n}};
  out.write("summary.json", [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  std::cout << "parity " << j["parity"].get<double>() << " +/- " << u.sigma_parity << " (" << u.method << "), "
            << r.iterations << " iterations" << (r.converged ? "" : " (not converged)") << '\n';
  return 0;
}

int cmd_sample(const std::string& spec, int n, std::uint64_t seed, double loss, const std::string& out) {
  const catsim::DensityMatrix rho = catsim::parse_state_spec(spec);
  if (!(loss >= 0.0 && loss < 1.0)) throw catsim::ConfigError("--loss must lie in [0, 1)");
  if (n < 1) throw catsim::ConfigError("--n must be >= 1");
  const catsim::MeasurementRun run = catsim::sample_quadratures(rho, n, loss, seed, spec);
  const auto parent = std::filesystem::path(out).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  catsim::write_records(run, out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Atom-light cat state simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", CATSIM_VERSION);

  std::string config, out_dir, records, state, out_file;
  std::optional<std::uint64_t> seed;
  std::uint64_t sample_seed = 1;
  int dim = 20, n = 0;
  double loss = 0.0, sample_loss = 0.0;

  auto* run = app.add_subcommand("run", "Run a scenario described by a configuration file");
  run->add_option("--config", config, "configuration file")->required();
  run->add_option("--seed", seed, "override scenario.seed");
  run->add_option("--out", out_dir, "output directory (default out/<scenario>)");

  auto* tomo = app.add_subcommand("tomo", "Maximum-likelihood reconstruction from homodyne records");
  tomo->add_option("--records", records, "record file")->required();
  tomo->add_option("--dim", dim, "Fock cutoff of the reconstruction")->required();
  tomo->add_option("--loss", loss, "detection loss to correct for")->required();
  tomo->add_option("--out", out_dir, "output directory")->required();

  auto* sample = app.add_subcommand("sample", "Draw homodyne records from a state");
  sample->add_option("--state", state, "vacuum | fock:N | coherent:A | even_cat:A | odd_cat:A | cat:A:THETA[:XI[:PHI]]")
      ->required();
  sample->add_option("--n", n, "number of records")->required();
  sample->add_option("--seed", sample_seed, "random seed")->required();
  sample->add_option("--out", out_file, "record file to write")->required();
  sample->add_option("--loss", sample_loss, "detection loss applied before sampling");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigExit;
  }

  try {
    if (*run) return cmd_run(config, seed, out_dir);
    if (*tomo) return cmd_tomo(records, dim, loss, out_dir);
    return cmd_sample(state, n, sample_seed, sample_loss, out_file);
  } catch (const catsim::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumericalExit;
  } catch (const catsim::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigExit;
  }
}
