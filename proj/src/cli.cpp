#include "probsheet/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "probsheet/errors.hpp"
#include "probsheet/eval.hpp"

namespace probsheet::cli {

namespace {

using nlohmann::json;

std::string plural(std::size_t n, const std::string& word) {
  return std::to_string(n) + " " + word + (n == 1 ? "" : "s");
}

std::string join(const std::vector<CellRef>& cells) {
  if (cells.empty()) return "(none)";
  std::string out;
  for (const CellRef& r : cells) out += (out.empty() ? "" : " ") + r.str();
  return out;
}

std::string file_stem(const Label& l) { return l.cell.str() + "_" + std::to_string(l.index); }

const char* family_name(FamilyKind k) {
  switch (k) {
    case FamilyKind::Gaussian:
      return "gaussian";
    case FamilyKind::ScaledBeta:
      return "scaled_beta";
    case FamilyKind::SoftmaxChoice:
      return "softmax_choice";
  }
  return "?";
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << content;
  if (!os) throw IoError("failed writing " + path.string());
}

std::string histogram_csv(const Histogram& h) {
  std::ostringstream os;
  os << "bin_low,bin_high,mass\n";
  for (std::size_t k = 0; k < h.masses.size(); ++k) {
    os << format_number(h.edges[k]) << ',' << format_number(h.edges[k + 1]) << ','
       << format_number(h.masses[k]) << '\n';
  }
  return os.str();
}

json family_json(const VariationalFamily& fam) {
  json j{{"kind", family_name(fam.kind)}};
  if (fam.kind == FamilyKind::ScaledBeta) {
    j["low"] = fam.low;
    j["high"] = fam.high;
  }
  if (fam.kind == FamilyKind::SoftmaxChoice) j["values"] = fam.values;
  return j;
}

std::vector<CellRef> resolve_targets(const LoadedSheet& sheet, const RunConfig& config) {
  return config.targets.empty() ? latent_cells(sheet.compiled, sheet.registry) : config.targets;
}

void run_smc_engine(const LoadedSheet& sheet, const RunConfig& config, std::ostream& out) {
  SmcConfig smc = config.smc;
  smc.seed = config.seed;
  const PosteriorMixture mix = run_smc(sheet.compiled, smc, sheet.registry);
  const std::vector<std::size_t> sizes = island_sizes(smc.particles, smc.islands);

  json summary;
  summary["engine"] = "smc";
  summary["title"] = sheet.file.title;
  summary["seed"] = config.seed;
  summary["particles"] = smc.particles;
  summary["log_evidence"] = mix.log_evidence;
  summary["islands"] = json::array();
  for (std::size_t j = 0; j < mix.islands.size(); ++j) {
    summary["islands"].push_back({{"particles", sizes[j]},
                                  {"log_evidence", mix.islands[j].log_evidence},
                                  {"weight", mix.island_weights[j]}});
  }
  summary["targets"] = json::object();
  out << "log evidence " << format_number(mix.log_evidence) << '\n';
  for (const CellRef& r : resolve_targets(sheet, config)) {
    const Histogram h = posterior_histogram(mix, r, config.bins);
    write_file(config.out / (r.str() + ".hist.csv"), histogram_csv(h));
    summary["targets"][r.str()] = {{"mean", h.mean}, {"stddev", h.stddev}};
    out << r.str() << " mean " << format_number(h.mean) << " stddev " << format_number(h.stddev)
        << '\n';
  }
  write_file(config.out / "summary.json", summary.dump(2) + "\n");
}

void run_bbvi_engine(const LoadedSheet& sheet, const RunConfig& config, std::ostream& out,
                     std::ostream& log) {
  BbviConfig bbvi = config.bbvi;
  bbvi.seed = config.seed;
  const BbviResult result = run_bbvi(sheet.compiled, bbvi, sheet.registry);

  std::ostringstream trace;
  trace << "iteration,elbo,gradient_norm,step_norm\n";
  for (const TraceRow& row : result.trace) {
    trace << row.iteration << ',' << format_number(row.elbo) << ','
          << format_number(row.gradient_norm) << ',' << format_number(row.step_norm) << '\n';
    if (config.verbose) {
      log << "iteration " << row.iteration << " elbo " << format_number(row.elbo) << " |grad| "
          << format_number(row.gradient_norm) << " |step| " << format_number(row.step_norm)
          << '\n';
    }
  }
  write_file(config.out / "bbvi_trace.csv", trace.str());

  json summary;
  summary["engine"] = "bbvi";
  summary["title"] = sheet.file.title;
  summary["seed"] = config.seed;
  summary["converged"] = result.converged;
  summary["iterations"] = result.iterations;
  summary["final_elbo"] = result.trace.empty() ? 0.0 : result.trace.back().elbo;
  summary["factors"] = json::array();
  out << (result.converged ? "converged after " : "stopped after ")
      << plural(result.iterations, "iteration") << '\n';
  for (const FactorSummary& fs : result.factors) {
    summary["factors"].push_back({{"label", fs.label.str()},
                                  {"family", family_json(fs.family)},
                                  {"lambda", fs.lambda},
                                  {"mean", fs.moments.mean},
                                  {"stddev", fs.moments.stddev}});
    std::ostringstream grid;
    grid << "x,density\n";
    for (const auto& [x, d] : fs.density) grid << format_number(x) << ',' << format_number(d) << '\n';
    write_file(config.out / (file_stem(fs.label) + ".density.csv"), grid.str());
    out << fs.label.str() << " mean " << format_number(fs.moments.mean) << " stddev "
        << format_number(fs.moments.stddev) << '\n';
  }

  summary["targets"] = json::object();
  const std::vector<CellRef> targets = resolve_targets(sheet, config);
  if (!targets.empty()) {
    Rng rng = derive_stream(config.seed, {std::numeric_limits<std::uint64_t>::max()});
    const auto draws =
        sample_fitted(sheet.compiled, result.state, targets, config.draws, sheet.registry, rng);
    for (std::size_t k = 0; k < targets.size(); ++k) {
      std::vector<std::pair<double, double>> weighted;
      weighted.reserve(draws[k].size());
      for (double x : draws[k]) weighted.emplace_back(x, 1.0);
      const Histogram h = weighted_histogram(weighted, config.bins);
      write_file(config.out / (targets[k].str() + ".hist.csv"), histogram_csv(h));
      summary["targets"][targets[k].str()] = {{"mean", h.mean}, {"stddev", h.stddev}};
    }
  }
  write_file(config.out / "summary.json", summary.dump(2) + "\n");
}

int report(std::ostream& err, int code, const std::exception& e) {
  err << "error: " << e.what() << '\n';
  return code;
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    return report(err, kExitConfig, e);
  } catch (const GradientUnavailableError& e) {
    return report(err, kExitNoGradient, e);
  } catch (const CycleError& e) {
    return report(err, kExitModel, e);
  } catch (const std::exception& e) {
    return report(err, kExitModel, e);
  }
}

std::vector<CellRef> parse_targets(const std::vector<std::string>& names) {
  std::vector<CellRef> out;
  for (const std::string& n : names) {
    auto r = CellRef::parse(n);
    if (!r) throw ConfigError("'" + n + "' is not a cell reference");
    out.push_back(*r);
  }
  return out;
}

}  // namespace

SheetFile parse_sheet_file(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw IoError(std::string("sheet file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("cells") || !doc["cells"].is_object()) {
    throw IoError("sheet file needs a top-level \"cells\" object");
  }
  SheetFile file;
  try {
    file.title = doc.value("title", "");
    for (const auto& [name, content] : doc["cells"].items()) {
      if (content.is_string()) {
        file.cells[name] = content.get<std::string>();
      } else if (content.is_number()) {
        file.cells[name] = format_number(content.get<double>());
      } else {
        throw IoError("cell " + name + " must hold a string or a number");
      }
    }
    if (doc.contains("black_ops")) {
      for (const json& op : doc.at("black_ops")) {
        BlackOpDecl d;
        d.name = op.at("name").get<std::string>();
        d.base = op.at("base").get<std::string>();
        d.noise_sd = op.value("noise_sd", 0.0);
        d.deterministic = op.value("deterministic", d.noise_sd == 0.0);
        file.black_ops.push_back(std::move(d));
      }
    }
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed sheet file: ") + e.what());
  }
  return file;
}

SheetFile read_sheet_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_sheet_file(text);
}

Sheet parse_sheet(const SheetFile& file) {
  Sheet sheet;
  for (const auto& [name, text] : file.cells) {
    auto ref = CellRef::parse(name);
    if (!ref) throw SyntaxError(name, "'" + name + "' is not a cell reference");
    try {
      sheet.emplace(*ref, parse_cell(*ref, text));
    } catch (const LexError& e) {
      throw SyntaxError(name, std::string(e.what()) + " (offset " + std::to_string(e.offset()) + ")");
    } catch (const ParseError& e) {
      throw SyntaxError(name, std::string(e.what()) + " (offset " + std::to_string(e.offset()) + ")");
    } catch (const ArityError& e) {
      throw SyntaxError(name, e.what());
    } catch (const ActualDatumError& e) {
      throw SyntaxError(name, e.what());
    }
  }
  return sheet;
}

BlackOpRegistry make_registry(const SheetFile& file) {
  BlackOpRegistry registry = BlackOpRegistry::with_builtins();
  for (const BlackOpDecl& d : file.black_ops) {
    const BlackOpDef* base = registry.find(d.base);
    if (!base) throw ConfigError("black op " + d.name + ": unknown base '" + d.base + "'");
    if (!(d.noise_sd >= 0) || !std::isfinite(d.noise_sd)) {
      throw ConfigError("black op " + d.name + ": noise_sd must be a nonnegative number");
    }
    if (d.deterministic && d.noise_sd > 0) {
      throw ConfigError("black op " + d.name + " is declared deterministic but has noise");
    }
    BlackFn fn = base->fn;
    const double sd = d.noise_sd;
    BlackFn wrapped = [fn, sd](std::span<const double> args, Rng& rng) {
      const double v = fn(args, rng);
      if (sd == 0.0) return v;
      return v + std::normal_distribution<double>(0.0, sd)(rng);
    };
    try {
      registry.register_op(BlackOpDef{d.name, base->arity, d.deterministic, std::move(wrapped)});
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  return registry;
}

LoadedSheet load_sheet_text(const std::string& text) {
  SheetFile file = parse_sheet_file(text);
  Sheet sheet = parse_sheet(file);
  BlackOpRegistry registry = make_registry(file);
  CompiledSheet compiled = compile_sheet(sheet);
  validate_black_ops(compiled.sheet, registry);
  return LoadedSheet{std::move(file), std::move(registry), std::move(compiled)};
}

LoadedSheet load_sheet(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return load_sheet_text(text);
}

std::vector<CellRef> latent_cells(const CompiledSheet& compiled, const BlackOpRegistry& registry) {
  const std::set<CellRef> random = random_cells(compiled, registry);
  std::vector<CellRef> out;
  for (const CellRef& r : compiled.order) {
    if (random.count(r) && !compiled.is_observed(r)) out.push_back(r);
  }
  return out;
}

std::vector<Label> latent_labels(const CompiledSheet& compiled) {
  std::set<Label> actual;
  for (const CellRef& r : compiled.observed) actual.insert(compiled.formula(r).as<Actual>().label);
  std::vector<Label> out;
  for (const Label& l : compiled.erp_labels) {
    if (!actual.count(l)) out.push_back(l);
  }
  return out;
}

void validate(const RunConfig& config, const CompiledSheet& compiled) {
  if (config.bins == 0) throw ConfigError("bins must be at least 1");
  for (const CellRef& r : config.targets) {
    if (!compiled.sheet.count(r)) throw ConfigError("target " + r.str() + " is not in the sheet");
  }
  if (config.engine == Engine::Smc) {
    island_sizes(config.smc.particles, config.smc.islands);
  } else {
    validate(config.bbvi);
    if (config.draws == 0) throw ConfigError("draws must be at least 1");
  }
}

void run(const LoadedSheet& sheet, const RunConfig& config, std::ostream& out,
         std::ostream& log) {
  validate(config, sheet.compiled);
  std::error_code ec;
  std::filesystem::create_directories(config.out, ec);
  if (ec) throw IoError("cannot create " + config.out.string() + ": " + ec.message());
  if (config.engine == Engine::Smc) {
    run_smc_engine(sheet, config, out);
  } else {
    run_bbvi_engine(sheet, config, out, log);
  }
}

std::string describe(const LoadedSheet& sheet) {
  const CompiledSheet& c = sheet.compiled;
  const std::vector<Label> latent = latent_labels(c);
  std::ostringstream os;
  if (!sheet.file.title.empty()) os << sheet.file.title << '\n';
  os << "cells: " << c.order.size() << '\n';
  os << "order: " << join(c.order) << '\n';
  os << "observed: " << join(c.observed) << '\n';
  os << "random choices:";
  for (const Label& l : latent) os << ' ' << l.str();
  os << (latent.empty() ? " (none)\n" : "\n");
  for (std::size_t i = 0; i < c.observed.size(); ++i) {
    os << "block " << i + 1 << " (" << c.observed[i].str() << "): " << c.pred_blocks[i].size()
       << " new [" << join(c.pred_blocks[i]) << "], restore [" << join(c.frontier_blocks[i])
       << "]\n";
  }
  os << "residual: " << c.residual.size() << " [" << join(c.residual) << "], restore ["
     << join(c.residual_frontier) << "]\n";
  os << plural(c.observed.size(), "observation") << ", "
     << plural(latent.size(), "latent random choice") << '\n';
  return os.str();
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bayesian inference over probabilistic spreadsheets"};
  app.name("probsheet");
  app.require_subcommand(1);

  RunConfig config;
  std::string sheet_path;
  std::string engine = "smc";
  std::string init = "zero";
  std::vector<std::string> targets;
  std::string out_dir = ".";

  CLI::App* run_cmd = app.add_subcommand("run", "Run SMC or BBVI on a sheet");
  run_cmd->add_option("sheet", sheet_path, "Sheet file (JSON)")->required();
  run_cmd->add_option("--engine", engine, "Inference engine")
      ->check(CLI::IsMember({"smc", "bbvi"}));
  run_cmd->add_option("--target", targets, "Cells to summarize, e.g. A1,B2")->delimiter(',');
  run_cmd->add_option("--particles", config.smc.particles, "Total SMC particles");
  run_cmd->add_option("--islands", config.smc.islands, "Independent SMC islands");
  run_cmd->add_option("--threads", config.smc.threads, "Worker threads (0 = all cores)");
  run_cmd->add_option("--samples", config.bbvi.samples, "BBVI samples per gradient");
  run_cmd->add_option("--iterations", config.bbvi.max_iterations, "BBVI iteration cap");
  run_cmd->add_option("--gamma", config.bbvi.gamma, "AdaGrad learning scale");
  run_cmd->add_option("--epsilon", config.bbvi.epsilon, "BBVI convergence threshold");
  run_cmd->add_option("--init", init, "BBVI initialisation")
      ->check(CLI::IsMember({"zero", "moments"}));
  run_cmd->add_option("--draws", config.draws, "Predictive draws for BBVI histograms");
  run_cmd->add_option("--seed", config.seed, "Random seed");
  run_cmd->add_option("--bins", config.bins, "Histogram bins");
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_flag("--verbose", config.verbose, "Log every BBVI iteration");

  std::string describe_path;
  CLI::App* describe_cmd = app.add_subcommand("describe", "Print the compiled structure of a sheet");
  describe_cmd->add_option("sheet", describe_path, "Sheet file (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*describe_cmd) {
    return guarded(err, [&] { out << describe(load_sheet(describe_path)); });
  }
  return guarded(err, [&] {
    config.engine = engine == "bbvi" ? Engine::Bbvi : Engine::Smc;
    config.bbvi.init = init == "moments" ? InitMode::MomentMatched : InitMode::Zero;
    config.targets = parse_targets(targets);
    config.out = out_dir;
    run(load_sheet(sheet_path), config, out, err);
  });
}

}  // namespace probsheet::cli
