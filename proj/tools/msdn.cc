#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <locale>
#include <optional>
#include <sstream>
#include <string>

#include "msdn/ablation.h"
#include "msdn/config.h"
#include "msdn/dataset.h"
#include "msdn/errors.h"
#include "msdn/gradcheck.h"
#include "msdn/model.h"
#include "msdn/training.h"
#include "msdn/zsl_eval.h"

namespace fs = std::filesystem;
using namespace msdn;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4, kShape = 5, kGradient = 6 };

// Raised when a gradient check fails; carries the report line.
struct GradientCheckFailed : Error {
  using Error::Error;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

int report(int code, const char* kind, const std::string& message) {
  std::cerr << "error: code=" << code << " kind=" << kind << ": " << one_line(message) << "\n";
  return code;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ArgumentError("cannot open " + path.string() + " for writing");
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  return out;
}

// Output files that cannot be written are a usage problem, not a data one.
template <typename F>
void write_output(const fs::path& path, F&& write) {
  try {
    write(path);
  } catch (const IoError& e) {
    throw ArgumentError(e.what());
  }
}

std::uint64_t effective_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback) {
  if (const char* env = std::getenv("MSDN_SEED"); env != nullptr && *env != '\0') {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(env, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || env[used] != '\0') throw ArgumentError(std::string("MSDN_SEED is not an integer: ") + env);
    return v;
  }
  return flag.value_or(fallback);
}

RunConfig load_run_config(const std::string& path) {
  return path.empty() ? RunConfig{} : run_config_from(read_key_values(path));
}

void check_compatible(const ModelParams& params, const Dataset& ds) {
  const ModelDims expected = dims_for(ds);
  const ModelDims& got = params.dims;
  if (got == expected) return;
  std::ostringstream msg;
  msg << "checkpoint dims (d_v=" << got.dim_visual << ", d_a=" << got.dim_attribute << ", K=" << got.num_attributes
      << ", R=" << got.num_regions << ") do not match data (d_v=" << expected.dim_visual
      << ", d_a=" << expected.dim_attribute << ", K=" << expected.num_attributes << ", R=" << expected.num_regions
      << ")";
  throw ShapeError(msg.str());
}

std::string shape_of(const Tensor& t) {
  std::string s;
  for (std::size_t i = 0; i < t.dims.size(); ++i) s += (i ? "x" : "") + std::to_string(t.dims[i]);
  return s.empty() ? "scalar" : s;
}

const char* dtype_name(DType d) {
  switch (d) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kI32: return "i32";
  }
  return "?";
}

// gen-data --------------------------------------------------------------

struct GenDataArgs {
  std::string spec;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  SynthSpec spec = a.spec.empty() ? SynthSpec{} : synth_spec_from(read_key_values(a.spec));
  spec.seed = effective_seed(a.seed, spec.seed);
  validate_synth_spec(spec);
  const Dataset ds = generate_synthetic(spec);
  write_output(a.out, [&](const fs::path& p) { save_dataset(ds, p); });
  for (const Tensor& t : dataset_to_tensors(ds)) {
    std::cout << t.name << " " << dtype_name(t.dtype) << " " << shape_of(t) << "\n";
  }
  return kOk;
}

// train -----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string history;
};

int run_train(const TrainArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  const Dataset ds = load_dataset(a.data);
  const TrainResult result = train(ds, cfg.train);
  write_output(a.out, [&](const fs::path& p) { save_checkpoint(result.params, p); });
  if (!a.history.empty()) {
    write_output(a.history, [&](const fs::path& p) { write_history_csv(result.history, p.string()); });
  }
  std::cout << std::setprecision(17);
  std::cout << "epochs " << result.history.size() << "\n";
  if (!result.history.empty()) {
    const LossBreakdown& last = result.history.back();
    std::cout << "final acec_a2v " << last.acec_a2v << "\n"
              << "final acec_v2a " << last.acec_v2a << "\n"
              << "final distill " << last.distill << "\n"
              << "final total " << last.total << "\n";
  }
  std::cout << "train_seen_acc " << seen_class_accuracy(result.params, ds, ds.train_idx, cfg.predict) << "\n";
  return kOk;
}

// eval ------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string mode = "gzsl";
  double alpha1 = PredictConfig{}.alpha1;
  double alpha2 = PredictConfig{}.alpha2;
  std::string out;
  std::string per_class;
};

int run_eval(const EvalArgs& a) {
  PredictConfig cfg{a.alpha1, a.alpha2, parse_eval_mode(a.mode)};
  cfg.validate();
  const Dataset ds = load_dataset(a.data);
  const ModelParams params = load_checkpoint(a.checkpoint);
  check_compatible(params, ds);
  const EvalReport report = evaluate(params, ds, cfg);
  if (!a.out.empty()) write_output(a.out, [&](const fs::path& p) { write_metrics_csv(report, p.string()); });
  if (!a.per_class.empty()) {
    write_output(a.per_class, [&](const fs::path& p) { write_per_class_csv(report, p.string()); });
  }
  std::cout << std::setprecision(17);
  if (cfg.mode == EvalMode::kCzsl) {
    std::cout << "acc " << report.acc << "\n";
  } else {
    std::cout << "U " << report.unseen << "\nS " << report.seen << "\nH " << report.harmonic << "\n";
  }
  return kOk;
}

// grad-check ------------------------------------------------------------

struct GradCheckArgs {
  std::string dims = "5,4,8,6,3,2";
  std::optional<std::uint64_t> seed;
};

int run_grad_check(const GradCheckArgs& a) {
  const TinyDims dims = parse_tiny_dims(a.dims);
  const std::uint64_t seed = effective_seed(a.seed, 1);
  const TinyProblem problem = random_tiny_problem(dims, seed);
  GradientHook hook;
#ifdef MSDN_INJECT_GRAD_BUG
  hook = [](ModelParams& g) {
    for (double& x : g.w2.data()) x *= 1.1;
  };
#endif
  const auto checks = check_total_loss_gradients(problem, gradient_check_loss_config(), hook);
  std::cout << std::setprecision(6) << std::scientific;
  const MatrixCheck* worst = nullptr;
  for (const MatrixCheck& c : checks) {
    std::cout << c.name << " max_rel_error " << c.result.max_rel_error << "\n";
    if (worst == nullptr || c.result.max_rel_error > worst->result.max_rel_error) worst = &c;
  }
  if (worst != nullptr && worst->result.max_rel_error > kGradCheckTolerance) {
    std::ostringstream msg;
    msg << std::setprecision(6) << std::scientific << worst->name << "[" << worst->result.worst_index
        << "] max_rel_error " << worst->result.max_rel_error << " exceeds " << kGradCheckTolerance
        << " (analytic " << worst->result.analytic << ", numeric " << worst->result.numeric << ")";
    throw GradientCheckFailed(msg.str());
  }
  std::cout << "ok\n";
  return kOk;
}

// ablate ----------------------------------------------------------------

struct AblateArgs {
  std::string data;
  std::string config;
  std::string out;
};

int run_ablate(const AblateArgs& a) {
  const RunConfig cfg = load_run_config(a.config);
  const Dataset ds = load_dataset(a.data);
  const auto rows = run_ablation(ds, cfg);
  write_output(a.out, [&](const fs::path& p) { write_ablation_csv(rows, p.string()); });
  std::cout << std::fixed << std::setprecision(4);
  for (const AblationRow& r : rows) std::cout << std::left << std::setw(18) << r.variant << " acc " << r.acc
                                              << "  H " << r.harmonic << "\n";
  return kOk;
}

// export-attention ------------------------------------------------------

struct ExportArgs {
  std::string data;
  std::string checkpoint;
  long long image = -1;
  std::string out;
};

void write_matrix_csv(const fs::path& path, const Matrix& m, const std::string& row_label,
                      const std::string& col_prefix) {
  std::ofstream out = open_output(path);
  out << row_label;
  for (std::size_t c = 0; c < m.cols(); ++c) out << "," << col_prefix << c;
  out << "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << r;
    for (std::size_t c = 0; c < m.cols(); ++c) out << "," << m(r, c);
    out << "\n";
  }
}

int run_export_attention(const ExportArgs& a) {
  const Dataset ds = load_dataset(a.data);
  const ModelParams params = load_checkpoint(a.checkpoint);
  check_compatible(params, ds);
  if (a.image < 0 || a.image >= static_cast<long long>(ds.num_samples())) {
    throw ArgumentError("--image " + std::to_string(a.image) + " out of range [0, " +
                        std::to_string(ds.num_samples()) + ")");
  }
  const ForwardTrace trace = forward(ds.features[a.image], ds.attributes, params);
  const fs::path dir(a.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ArgumentError("cannot create directory " + dir.string() + ": " + ec.message());
  write_matrix_csv(dir / "beta.csv", trace.a2v.beta, "attribute", "region_");
  write_matrix_csv(dir / "tau.csv", trace.v2a.tau, "region", "attribute_");
  std::ofstream scores = open_output(dir / "scores.csv");
  scores << "attribute,psi,Psi\n";
  for (std::size_t k = 0; k < trace.a2v.psi.size(); ++k) {
    scores << k << "," << trace.a2v.psi[k] << "," << trace.v2a.psi[k] << "\n";
  }
  std::cout << "image " << a.image << " label " << ds.labels[a.image] << "\n"
            << "wrote " << (dir / "beta.csv").string() << ", " << (dir / "tau.csv").string() << ", "
            << (dir / "scores.csv").string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mutually semantic distillation network for zero-shot learning"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic zero-shot dataset");
  gen_cmd->add_option("--spec", gen.spec, "key=value synthetic spec file")->check(CLI::ExistingFile);
  gen_cmd->add_option("--seed", gen.seed, "generator seed (MSDN_SEED overrides)");
  gen_cmd->add_option("--out", gen.out, "output container path")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--data", tr.data, "dataset container")->required();
  train_cmd->add_option("--config", tr.config, "key=value run config")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "checkpoint path")->required();
  train_cmd->add_option("--history", tr.history, "per-epoch loss CSV");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--data", ev.data, "dataset container")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--mode", ev.mode, "czsl or gzsl")->capture_default_str();
  eval_cmd->add_option("--alpha1", ev.alpha1, "attribute-to-visual weight")->capture_default_str();
  eval_cmd->add_option("--alpha2", ev.alpha2, "visual-to-attribute weight")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "metric CSV");
  eval_cmd->add_option("--per-class", ev.per_class, "per-class accuracy CSV");

  GradCheckArgs gc;
  auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference check of the loss gradients");
  gc_cmd->add_option("--dims", gc.dims, "k,r,dv,da,cs,cu")->capture_default_str();
  gc_cmd->add_option("--seed", gc.seed, "instance seed (MSDN_SEED overrides)");

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "Train and evaluate the ablation variants");
  ab_cmd->add_option("--data", ab.data, "dataset container")->required();
  ab_cmd->add_option("--config", ab.config, "key=value run config")->check(CLI::ExistingFile);
  ab_cmd->add_option("--out", ab.out, "ablation CSV")->required();

  ExportArgs ex;
  auto* ex_cmd = app.add_subcommand("export-attention", "Export attention maps of one sample");
  ex_cmd->add_option("--data", ex.data, "dataset container")->required();
  ex_cmd->add_option("--checkpoint", ex.checkpoint, "checkpoint path")->required();
  ex_cmd->add_option("--image", ex.image, "sample index")->required();
  ex_cmd->add_option("--out", ex.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(kUsage, "usage", e.what());
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*eval_cmd) return run_eval(ev);
    if (*gc_cmd) return run_grad_check(gc);
    if (*ab_cmd) return run_ablate(ab);
    if (*ex_cmd) return run_export_attention(ex);
  } catch (const GradientCheckFailed& e) {
    return report(kGradient, "gradient", e.what());
  } catch (const ArgumentError& e) {
    return report(kUsage, "usage", e.what());
  } catch (const ShapeError& e) {
    return report(kShape, "shape", e.what());
  } catch (const TrainingDiverged& e) {
    return report(kNumeric, "numeric", "epoch=" + std::to_string(e.epoch()) + " batch=" +
                                           std::to_string(e.batch()) + ": " + e.what());
  } catch (const NumericError& e) {
    return report(kNumeric, "numeric", e.what());
  } catch (const DataError& e) {
    return report(kData, "data", e.what());
  } catch (const std::exception& e) {
    return report(1, "internal", e.what());
  }
  return report(kUsage, "usage", "no subcommand given");
}
