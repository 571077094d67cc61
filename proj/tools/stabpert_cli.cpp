#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "stabpert/parallel.hpp"
#include "stabpert/scenario.hpp"

using namespace stabpert;

int main(int argc, char** argv) {
  CLI::App app{"Finite-rank perturbation and stability laboratory"};
  app.require_subcommand(1, 1);

  std::string scenario_src;
  std::string out_dir;
  std::optional<std::size_t> trunc_dim;
  std::optional<double> pts_per_decade;
  std::optional<double> tol;
  std::optional<std::uint64_t> orbit_max;
  std::optional<std::uint64_t> seed;
  std::optional<double> scale_b;
  std::optional<double> scale_c;

  for (const char* name : {"certify", "perturb", "stability", "threshold", "integral", "scan"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--scenario", scenario_src, "scenario file or builtin:NAME")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--trunc-dim", trunc_dim, "truncation index n_max");
    sub->add_option("--grid-pts-per-decade", pts_per_decade, "log grid density");
    sub->add_option("--tol", tol, "refinement stability tolerance");
    sub->add_option("--orbit-max", orbit_max, "orbit budget");
    sub->add_option("--seed", seed, "probe seed");
    sub->add_option("--scale-b", scale_b, "scale factor s_B");
    sub->add_option("--scale-c", scale_c, "scale factor s_C");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  configure_threads_from_env();
  try {
    Scenario s = load_scenario(scenario_src);
    if (trunc_dim) {
      if (s.model.kind != "diagonal" || s.model.rule.id != "polar_power")
        throw Error(ErrorKind::InvalidArgument, "--trunc-dim needs a rule-based diagonal model");
      s.model.n_max = *trunc_dim;
    }
    if (pts_per_decade) {
      s.config.grid.pts_per_decade = *pts_per_decade;
      s.config.quadrature.pts_per_decade = *pts_per_decade;
    }
    if (tol) s.config.stability_tol = *tol;
    if (orbit_max) s.config.orbit_max = *orbit_max;
    if (seed) s.config.seed = *seed;
    if (scale_b) s.perturbation.scale_b = *scale_b;
    if (scale_c) s.perturbation.scale_c = *scale_c;
    validate_scenario(s);

    const Subcommand sub = parse_subcommand(app.get_subcommands().front()->get_name());
    const ReportBundle bundle = run(sub, s);
    emit_reports(bundle, out_dir);
    std::cout << bundle.subcommand << " " << (s.name.empty() ? scenario_src : s.name) << ": " << bundle.verdict
              << "\n";
    for (const auto& e : bundle.errors) std::cerr << "  " << e << "\n";
    return bundle.exit_code;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
