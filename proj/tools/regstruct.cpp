// regstruct: command-line driver for the structures, kernels, models, verification suites and the Phi4 solver.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "regstruct/suites.hpp"

namespace fs = std::filesystem;
using namespace regstruct;

namespace {

struct Global {
  std::uint64_t seed = 7;
  int threads = 0;
  std::string out;
};

/// "2^-7", "1/128" or a decimal.
double parse_eps(const std::string& s) {
  auto caret = s.find('^');
  if (caret != std::string::npos) return std::pow(std::stod(s.substr(0, caret)), std::stod(s.substr(caret + 1)));
  auto slash = s.find('/');
  if (slash != std::string::npos) return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
  return std::stod(s);
}

int eps_level(double eps) {
  int k = dyadic_level(eps);
  if (k > 10) throw SuiteError("grids finer than 2^-10 per axis are refused");
  return k;
}

/// Writes to the file when a path is given, else to stdout.
void emit(const CsvTable& t, const std::string& path) {
  if (path.empty()) {
    t.write(std::cout);
  } else {
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    t.save(path);
  }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
  std::ofstream o(p);
  if (!o) throw IoError("cannot write " + p.string());
  o << j.dump(2) << "\n";
}

std::shared_ptr<const KernelDecomposition> kernel_on(const Grid& g, KernelOptions o = {}) {
  return std::make_shared<const KernelDecomposition>(KernelDecomposition::cached(g, o));
}

RegularityStructure load_structure(const std::string& preset, const std::string& spec, double kappa, int degree) {
  return spec.empty() ? structure_preset(preset, kappa, degree) : StructureIO::load(spec);
}

std::array<double, 4> parse_box(const std::vector<double>& v, std::array<double, 4> fallback) {
  if (v.empty()) return fallback;
  if (v.size() != 4) throw CLI::ValidationError("--box", "expects t0 t1 x0 x1");
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discrete regularity structures: models, reconstruction, Schauder convolution and the Phi4 fixed point"};
  app.require_subcommand(1);
  app.fallthrough();
  Global G;
  app.add_option("--seed", G.seed, "noise seed")->capture_default_str();
  app.add_option("--threads", G.threads, "worker threads (0: runtime default)");
  app.add_option("--out", G.out, "output file or directory");

  // structure
  auto* st = app.add_subcommand("structure", "print the symbol table of a structure");
  std::string preset = "phi4", spec;
  double kappa = 0.01;
  int degree = 2;
  st->add_option("--preset", preset, "poly, polyE or phi4")->capture_default_str();
  st->add_option("--spec", spec, "structure spec file (overrides --preset)");
  st->add_option("--kappa", kappa)->capture_default_str();
  st->add_option("--degree", degree, "polynomial degree for poly presets")->capture_default_str();

  // grid
  auto* gr = app.add_subcommand("grid", "print a lattice layout, optionally with seeded white noise");
  std::string eps_s = "2^-5";
  double t0 = 0.0, t1 = 0.25, period = 1.0;
  std::vector<int> scaling{2, 1};
  bool noise = false;
  gr->add_option("--eps", eps_s)->capture_default_str();
  gr->add_option("--t0", t0)->capture_default_str();
  gr->add_option("--t1", t1)->capture_default_str();
  gr->add_option("--period", period)->capture_default_str();
  gr->add_option("--scaling", scaling)->expected(2)->capture_default_str();
  gr->add_flag("--noise", noise, "write white noise (binary + CSV) into --out");

  // kernel
  auto* ke = app.add_subcommand("kernel", "build or inspect the dyadic kernel decomposition");
  std::string kmode = "inspect";
  bool check_moments = false, uncorrected = false;
  ke->add_option("mode", kmode, "build or inspect")->check(CLI::IsMember({"build", "inspect"}));
  ke->add_option("--eps", eps_s)->capture_default_str();
  ke->add_option("--t0", t0)->capture_default_str();
  ke->add_option("--t1", t1)->capture_default_str();
  ke->add_flag("--check-moments", check_moments, "print the moment residual table");
  ke->add_flag("--no-correct", uncorrected, "raw annular slices (negative control)");

  // model
  auto* mo = app.add_subcommand("model", "build a canonical model and check its algebra");
  std::string mmode = "build";
  std::vector<std::string> extend;
  mo->add_option("mode", mmode)->check(CLI::IsMember({"build"}));
  mo->add_option("--preset", preset)->capture_default_str();
  mo->add_option("--eps", eps_s)->capture_default_str();
  mo->add_option("--t0", t0)->capture_default_str();
  mo->add_option("--t1", t1)->capture_default_str();
  mo->add_option("--kappa", kappa)->capture_default_str();
  mo->add_option("--extend", extend, "extend by I(tau) (repeatable)");

  // md
  auto* md = app.add_subcommand("md", "seminorms of the Phi4 test distribution");
  std::string mdmode = "seminorm";
  double gamma = 1.1, eta = 0.0;
  std::vector<double> box;
  md->add_option("mode", mdmode)->check(CLI::IsMember({"seminorm"}));
  md->add_option("--eps", eps_s)->capture_default_str();
  md->add_option("--gamma", gamma)->capture_default_str();
  md->add_option("--eta", eta)->capture_default_str();
  md->add_option("--box", box, "t0 t1 x0 x1")->expected(4);
  md->add_option("--kappa", kappa)->capture_default_str();

  // recon
  auto* re = app.add_subcommand("recon", "reconstruction scaling test");
  std::string rmode = "test";
  re->add_option("mode", rmode)->check(CLI::IsMember({"test"}));
  re->add_option("--preset", preset, "phi4 (test distribution) or poly (x^2 lift)")->capture_default_str();
  re->add_option("--gamma", gamma)->capture_default_str();
  re->add_option("--eps", eps_s)->capture_default_str();
  re->add_option("--kappa", kappa)->capture_default_str();

  // conv
  auto* co = app.add_subcommand("conv", "Schauder identity and gain for a truncated smooth lift");
  std::string conv_eps = "2^-6";  // coarser lattices leave too few increment scales for the fit
  co->add_option("--eps", conv_eps)->capture_default_str();
  co->add_option("--gamma", gamma)->capture_default_str();
  co->add_option("--kappa", kappa)->capture_default_str();

  // solve
  auto* so = app.add_subcommand("solve", "Phi4 fixed point by Picard iteration");
  double T = 0.5, amplitude = 1.0;
  int coupling = -1;
  bool causal = false;
  so->add_option("--preset", preset)->check(CLI::IsMember({"phi4"}))->capture_default_str();
  so->add_option("--eps", eps_s)->capture_default_str();
  so->add_option("--T", T)->capture_default_str();
  so->add_option("--kappa", kappa)->capture_default_str();
  so->add_option("--amplitude", amplitude, "noise scale (0: deterministic)")->capture_default_str();
  so->add_option("--coupling-level", coupling, "aggregate the noise from this finer dyadic level");
  so->add_flag("--causal", causal, "row-by-row kernel sums");

  // suite
  auto* su = app.add_subcommand("suite", "run a verification suite (exit 1 iff an assertion fails)");
  std::string sname;
  SuiteConfig sc;
  su->add_option("name", sname, "suite name or all")->required();
  su->add_option("--level", sc.level, "log2(1/eps) of the main lattice (0: suite default)");
  su->add_option("--scaling-level", sc.scaling_level)->capture_default_str();
  su->add_option("--kappa", sc.kappa)->capture_default_str();
  su->add_flag("--negative", sc.negative, "run the broken configuration");

  CLI11_PARSE(app, argc, argv);
#ifdef _OPENMP
  if (G.threads > 0) omp_set_num_threads(G.threads);
#endif

  try {
    if (*st) {
      auto S = load_structure(preset, spec, kappa, degree);
      CsvTable t({"index", "id", "kind", "homogeneity"});
      for (std::size_t i = 0; i < S.size(); ++i)
        t.add({long(i), S.symbol(i).id, std::string(to_string(S.symbol(i).kind)), S.symbol(i).homogeneity});
      emit(t, G.out);
      return 0;
    }

    double eps = parse_eps(eps_s);
    if (*gr) {
      Grid g(eps, t0, t1, Scaling{scaling[0], scaling[1]}, period);
      eps_level(eps);
      std::cout << "eps " << format_double(g.eps()) << " dt " << format_double(g.dt()) << " dx " << format_double(g.dx())
                << " rows " << g.rows() << " [" << g.first_row() << ", " << g.last_row() << "] cols " << g.cols() << "\n";
      if (noise) {
        if (G.out.empty()) throw IoError("--noise needs --out");
        fs::create_directories(G.out);
        auto xi = white_noise(g, G.seed);
        save_grid_function((fs::path(G.out) / "noise.rsgf").string(), xi);
        CsvTable t({"m", "j", "t", "x", "value"});
        for (long m = g.first_row(); m <= g.last_row(); ++m)
          for (long j = 0; j < g.cols(); ++j) t.add({m, j, g.time(m), g.space(j), xi(m, j)});
        t.save((fs::path(G.out) / "noise.csv").string());
      }
      return 0;
    }

    if (*ke) {
      eps_level(eps);
      Grid g(eps, t0, t1);
      KernelOptions ko;
      ko.correct = !uncorrected;
      auto D = KernelDecomposition::cached(g, ko);
      CsvTable t({"slice", "rows", "support_radius", "k", "moment"});
      for (int n = 0; n <= D.finest(); ++n)
        if (check_moments) {
          for (const auto& k : D.killed())
            t.add({long(n), D.slice(n).L, D.support_radius(n), std::to_string(k.t) + "," + std::to_string(k.x), D.moment(n, k)});
        } else {
          t.add({long(n), D.slice(n).L, D.support_radius(n), std::string(""), std::string("")});
        }
      emit(t, G.out);
      if (check_moments) std::cerr << "killing residual " << format_double(D.killing_residual()) << "\n";
      return kmode == "inspect" && check_moments && D.killing_residual() > 1e-10 ? 1 : 0;
    }

    if (*mo) {
      eps_level(eps);
      Grid g(eps, t0, t1);
      auto S = structure_preset(preset, kappa);
      auto Z = preset == "phi4" ? DiscreteModel::canonical(white_noise(g, G.seed), kernel_on(g), S)
                                : DiscreteModel::polynomial(g, S);
      for (const auto& tau : extend) Z = Z.extend(tau);
      SamplingPlan plan;
      plan.box = {t0 + 0.25 * (t1 - t0), t1 - 0.25 * (t1 - t0), 0.0, 1.0};
      plan.step_t = (t1 - t0) / 8.0;
      AxiomOptions ao;
      ao.scaling = false;
      auto rep = check_model_axioms(Z, 1.5, plan, ao);
      std::cout << "identity " << format_double(rep.identity_residual) << "\ncomposition "
                << format_double(rep.composition_residual) << "\nconsistency " << format_double(rep.consistency_residual)
                << "\n";
      if (!G.out.empty()) Z.save(G.out);
      return rep.ok() ? 0 : 1;
    }

    if (*md) {
      eps_level(eps);
      Grid g(eps, -0.3, 0.6);
      auto Z = DiscreteModel::canonical(white_noise(g, G.seed), kernel_on(g), phi4_structure(kappa));
      auto f = phi4_test_distribution(Z, gamma, std::lround(-0.28 / g.dt()), std::lround(0.55 / g.dt()));
      auto b = parse_box(box, {0.0, 0.25, 0.0, 1.0});
      PairPlan plan{{b[0], b[1], b[2], b[3]}, 20000, G.seed};
      CsvTable t({"quantity", "value"});
      t.add({std::string("dgamma_seminorm"), dgamma_seminorm(f, gamma, plan)});
      t.add({std::string("weighted_seminorm"), weighted_seminorm(positive_part(f), gamma, WeightSpec{eta}, plan)});
      emit(t, G.out);
      if (!G.out.empty()) f.save((fs::path(G.out).replace_extension(".rsmd")).string());
      return 0;
    }

    if (*re) {
      eps_level(eps);
      Grid g(eps, -0.3, 0.6);
      long r0 = std::lround(-0.28 / g.dt()), r1 = std::lround(0.55 / g.dt());
      ReconstructionOptions opt;
      opt.plan = {{0.0, 0.25, 0.0, 1.0}, 1.0 / 8.0, 1.0 / 4.0, 3, 1.0, G.seed};
      std::optional<ModelledDistribution> f;
      std::optional<DiscreteModel> Z;
      if (preset == "phi4") {
        Z = DiscreteModel::canonical(white_noise(g, G.seed), kernel_on(g), phi4_structure(kappa));
        f = phi4_test_distribution(*Z, gamma, r0, r1);
        opt.crosscheck_ratio = 8.0;
      } else {
        Z = DiscreteModel::polynomial(g, polynomial_structure(3));
        f = detail::x2_lift(*Z, gamma, r0, r1);
        opt.plan.box = {0.0, 0.25, 0.5, 1.0};
        opt.plan.step_x = 0.5;
      }
      auto rep = reconstruction_scaling_test(*f, std::ldexp(1.0, -5), 0.5, opt);
      CsvTable t({"delta", "sup_pairing", "class", "fitted_exponent"});
      for (std::size_t i = 0; i < rep.delta_grid.size(); ++i)
        t.add({rep.delta_grid[i], rep.max_pairing[i], std::string("pairing"), std::string("")});
      t.add({std::string(""), std::string(""), std::string("fit"), rep.fitted_exponent});
      t.add({std::string(""), rep.crosscheck, std::string("crosscheck"), std::string("")});
      emit(t, G.out);
      double top = *std::max_element(rep.max_pairing.begin(), rep.max_pairing.end());
      bool exact = top <= 1e-12;  // nothing truncated: the bound holds with constant zero
      return (exact || rep.fitted_exponent >= gamma - 0.2) && rep.crosscheck <= 1e-8 ? 0 : 1;
    }

    if (*co) {
      eps = parse_eps(conv_eps);
      eps_level(eps);
      Grid g(eps, 0.0, 0.7);
      auto Z = DiscreteModel::canonical(white_noise(g, G.seed), kernel_on(g), phi4_structure(kappa)).extend("I(Xi)^3");
      auto f = detail::sine_lift(Z, gamma, 0, std::lround(0.6 / g.dt()));
      SchauderOptions opt;
      opt.plan = {{0.3, 0.55, 0.0, 1.0}, 4000, G.seed};
      opt.increments.plan = {{0.3, 0.55, 0.0, 1.0}, 20000, G.seed};
      opt.increments.dmax = 0.125;
      auto rep = verify_schauder(f, opt);
      CsvTable t({"level", "identity_residual", "input_exponent", "output_exponent", "gain"});
      t.add({rep.level, rep.identity_residual, rep.input.exponent, rep.output.exponent, rep.gain});
      emit(t, G.out);
      return rep.identity_ok && rep.gain_ok ? 0 : 1;
    }

    if (*so) {
      eps_level(eps);
      if (G.out.empty()) throw IoError("solve needs --out");
      Phi4Config c;
      c.eps = eps;
      c.seed = G.seed;
      c.T = T;
      c.kappa = kappa;
      c.amplitude = amplitude;
      c.coupling_level = coupling;
      c.picard.causal = causal;
      c.picard.seed = G.seed;
      auto r = phi4_run(c);
      fs::create_directories(G.out);
      save_grid_function((fs::path(G.out) / "solution.rsgf").string(), r.Ru);
      CsvTable t({"iteration", "residual", "contraction"});
      for (std::size_t i = 0; i < r.report.residuals.size(); ++i)
        t.add({long(i + 1), r.report.residuals[i], i == 0 ? CsvTable::Cell(std::string("")) : CsvTable::Cell(r.report.contractions[i - 1])});
      t.save((fs::path(G.out) / "diagnostics.csv").string());
      write_json(fs::path(G.out) / "manifest.json",
                 {{"command", "solve"}, {"preset", preset}, {"eps", eps}, {"seed", G.seed}, {"T", T}, {"kappa", kappa},
                  {"amplitude", amplitude}, {"coupling_level", coupling}, {"causal", causal},
                  {"gamma", c.gamma}, {"gamma_bar", c.gamma_bar}, {"eta", c.eta},
                  {"picard", {{"max_iterations", c.picard.max_iterations}, {"tol", c.picard.tol},
                              {"max_halvings", c.picard.max_halvings}, {"halve_at", c.picard.halve_at}}},
                  {"T_used", r.report.T}, {"halvings", r.report.halvings}, {"iterations", r.report.iterations},
                  {"converged", r.report.converged}, {"seminorm", r.report.seminorm}});
      std::ofstream((fs::path(G.out) / "timing.txt").string()) << format_double(r.report.seconds) << "\n";
      std::cout << "converged " << r.report.converged << " after " << r.report.iterations << " iterations on [0, "
                << format_double(r.report.T) << "]\n";
      return r.report.converged ? 0 : 1;
    }

    if (*su) {
      sc.seed = G.seed;
      std::vector<std::string> names = sname == "all" ? suite_names() : std::vector<std::string>{sname};
      bool ok = true;
      for (const auto& n : names) {
        auto r = run_suite(n, sc);
        ok = ok && r.ok;
        if (G.out.empty()) {
          r.table.write(std::cout);
        } else {
          fs::create_directories(G.out);
          r.table.save((fs::path(G.out) / (n + ".csv")).string());
          r.timing.save((fs::path(G.out) / (n + ".timing.csv")).string());
          write_json(fs::path(G.out) / (n + ".manifest.json"),
                     {{"suite", n}, {"seed", sc.seed}, {"level", sc.level}, {"scaling_level", sc.scaling_level},
                      {"kappa", sc.kappa}, {"negative", sc.negative}, {"threads", G.threads}});
        }
        std::cerr << n << ": " << (r.ok ? "pass" : "FAIL") << " (" << r.failures << " failed rows)\n";
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
