//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_CLI_HPP
#define TRISEC_CLI_HPP

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trisec/attack.hpp"
#include "trisec/baselines.hpp"
#include "trisec/errors.hpp"
#include "trisec/gradient_check.hpp"
#include "trisec/image_io.hpp"
#include "trisec/metrics.hpp"
#include "trisec/model_io.hpp"
#include "trisec/report_io.hpp"

namespace trisec {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  exit_ok = 0,
  /// The attack ran to completion but did not succeed.
  exit_attack_failed = 1,
  /// Bad arguments, unreadable or malformed inputs.
  exit_usage = 2,
};

namespace detail {
  inline Tensor load_input(const NetworkSpec &net, const std::string &path) {
    Tensor x = load_image(path);
    if (x.shape() != net.input_shape())
      throw ShapeError("image " + path + " has shape " + shape_str(x.shape()) +
                       " but the model expects " +
                       shape_str(net.input_shape()));
    return x;
  }

  /// Scores and classification of an adversarial image as it will be
  /// stored on disk.
  inline nlohmann::json outcome_json(const NetworkSpec &net, const Tensor &x,
                                     const Tensor &adv,
                                     std::optional<std::size_t> target,
                                     std::size_t original) {
    const Tensor out = predict(net, adv);
    const std::size_t pred = argmax(out);
    const auto scores = perceptual_scores(x, adv);
    const Tensor q = quantize_8bit(adv);
    const std::size_t q_pred = argmax(predict(net, q));
    auto hit = [&](std::size_t p) { return target ? p == *target : p != original; };
    nlohmann::json j = {{"original_class", original},
                        {"predicted_class", pred},
                        {"success", hit(pred)},
                        {"cr", scores.cr},
                        {"ssi", scores.ssi},
                        {"post_quantization_class", q_pred},
                        {"post_quantization_success", hit(q_pred)}};
    j["target_class"] = target ? nlohmann::json(*target) : nlohmann::json();
    if (target)
      j["target_confidence"] = out[*target];
    return j;
  }

  inline std::vector<double> parse_if_list(const std::string &text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(item, &used);
      } catch (const std::exception &) {
        used = 0;
      }
      if (used == 0 || used != item.size())
        throw ConfigError("invalid imperceptibility factor '" + item + "'");
      values.push_back(v);
    }
    return values;
  }
} // namespace detail

/// Runs the command-line tool; returns the process exit code.
inline int run_cli(int argc, const char *const *argv, std::ostream &out,
                   std::ostream &err) {
  CLI::App app{"Imperceptible targeted adversarial attacks on small "
               "feed-forward image classifiers",
               "trisec"};
  app.require_subcommand(1);

  std::string model, image, out_image, out_report;

  // eval
  auto *eval = app.add_subcommand("eval", "print the top-5 classes of an image");
  eval->add_option("--model", model, "model manifest (.json)")->required();
  eval->add_option("--image", image, "input image (.png/.pgm/.ppm)")->required();

  // attack
  AttackConfig cfg;
  auto *attack = app.add_subcommand("attack", "run the imperceptible targeted attack");
  attack->add_option("--model", model, "model manifest (.json)")->required();
  attack->add_option("--image", image, "input image")->required();
  attack->add_option("--target", cfg.target_class, "target class")->required();
  attack->add_option("--eps", cfg.epsilon, "cost bound")->capture_default_str();
  attack->add_option("--cr-min", cfg.cr_min, "correlation bound")->capture_default_str();
  attack->add_option("--ssi-min", cfg.ssi_min, "structural similarity bound")
      ->capture_default_str();
  attack->add_option("--step", cfg.step_size, "gradient step size")->capture_default_str();
  attack->add_option("--max-inner", cfg.max_inner_iters, "descent steps per outer iteration")
      ->capture_default_str();
  attack->add_option("--max-outer", cfg.max_outer_iters, "outer iterations")
      ->capture_default_str();
  attack->add_option("--seed", cfg.seed, "seed of the initial perturbation")
      ->capture_default_str();
  attack->add_option("--out-image", out_image, "adversarial image to write")->required();
  attack->add_option("--out-report", out_report, "JSON report to write")->required();

  // fgsm
  std::optional<std::size_t> fgsm_target;
  double if_factor = 0.0;
  auto *fgsm_cmd = app.add_subcommand("fgsm", "fast gradient sign baseline");
  fgsm_cmd->add_option("--model", model, "model manifest (.json)")->required();
  fgsm_cmd->add_option("--image", image, "input image")->required();
  fgsm_cmd->add_option("--target", fgsm_target, "target class (untargeted if omitted)");
  fgsm_cmd->add_option("--if", if_factor, "imperceptibility factor")->required();
  fgsm_cmd->add_option("--out-image", out_image, "adversarial image to write")->required();
  fgsm_cmd->add_option("--out-report", out_report, "JSON report to write")->required();

  // lbfgs
  LbfgsAttackConfig lcfg;
  std::size_t target = 0;
  auto *lbfgs_cmd = app.add_subcommand("lbfgs", "box-constrained L-BFGS baseline");
  lbfgs_cmd->add_option("--model", model, "model manifest (.json)")->required();
  lbfgs_cmd->add_option("--image", image, "input image")->required();
  lbfgs_cmd->add_option("--target", target, "target class")->required();
  lbfgs_cmd->add_option("--c", lcfg.c, "weight of the noise norm")->capture_default_str();
  lbfgs_cmd->add_option("--max-iters", lcfg.max_iters, "optimizer iterations")
      ->capture_default_str();
  lbfgs_cmd->add_option("--out-image", out_image, "adversarial image to write")->required();
  lbfgs_cmd->add_option("--out-report", out_report, "JSON report to write")->required();

  // sweep
  std::string if_list = "1,0.1,0.01,0.001,0.0001", out_csv, out_json;
  auto *sweep = app.add_subcommand("sweep", "imperceptibility-factor sweep of both baselines");
  sweep->add_option("--model", model, "model manifest (.json)")->required();
  sweep->add_option("--image", image, "input image")->required();
  sweep->add_option("--target", target, "target class")->required();
  sweep->add_option("--if", if_list, "comma-separated factors")->capture_default_str();
  sweep->add_option("--c", lcfg.c, "L-BFGS noise weight")->capture_default_str();
  sweep->add_option("--out-csv", out_csv, "CSV table to write")->required();
  sweep->add_option("--out-json", out_json, "optional JSON copy of the table");

  // check-gradients
  GradientCheckOptions gopt;
  auto *check = app.add_subcommand("check-gradients",
                                   "compare analytic input gradients with finite differences");
  check->add_option("--model", model, "model manifest (.json)")->required();
  check->add_option("--image", image, "probe image (random if omitted)");
  check->add_option("--probes", gopt.probes, "coordinates to check")->capture_default_str();
  check->add_option("--seed", gopt.seed, "seed for the probe image, target and coordinates")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp &) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::ParseError &e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return exit_usage;
  }

  try {
    const NetworkSpec net = load_model(model);

    if (eval->parsed()) {
      const Tensor x = detail::load_input(net, image);
      const Tensor probs = predict(net, x);
      std::vector<std::size_t> order(probs.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return probs[a] > probs[b];
      });
      nlohmann::json top = nlohmann::json::array();
      for (std::size_t k = 0; k < std::min<std::size_t>(5, order.size()); ++k)
        top.push_back({{"class", order[k]}, {"probability", probs[order[k]]}});
      out << nlohmann::json{{"predicted_class", order[0]}, {"top5", top}}.dump(2)
          << '\n';
      return exit_ok;
    }

    if (attack->parsed()) {
      const Tensor x = detail::load_input(net, image);
      const AttackReport report = run_attack(net, x, cfg);
      nlohmann::json j = to_json(report);
      j["config"] = {{"epsilon", cfg.epsilon},
                     {"cr_min", cfg.cr_min},
                     {"ssi_min", cfg.ssi_min},
                     {"step_size", cfg.step_size},
                     {"max_inner_iters", cfg.max_inner_iters},
                     {"max_outer_iters", cfg.max_outer_iters},
                     {"seed", cfg.seed}};
      save_image(report.final_adversarial_image, out_image);
      write_json(j, out_report);
      out << (report.success ? "success" : "failure") << ": target "
          << cfg.target_class << " after " << report.iterations_run
          << " outer / " << report.inner_iterations_total
          << " inner iterations\n";
      return report.success ? exit_ok : exit_attack_failed;
    }

    if (fgsm_cmd->parsed()) {
      const Tensor x = detail::load_input(net, image);
      const std::size_t original = argmax(predict(net, x));
      const auto res = fgsm(net, x, fgsm_target, if_factor);
      nlohmann::json j = detail::outcome_json(net, x, res.adversarial,
                                              fgsm_target, original);
      j["attack"] = "fgsm";
      j["if"] = if_factor;
      save_image(res.adversarial, out_image);
      write_json(j, out_report);
      return j["success"].get<bool>() ? exit_ok : exit_attack_failed;
    }

    if (lbfgs_cmd->parsed()) {
      const Tensor x = detail::load_input(net, image);
      const std::size_t original = argmax(predict(net, x));
      LbfgsResult details;
      const auto res = lbfgs_attack(net, x, target, lcfg, &details);
      nlohmann::json j =
          detail::outcome_json(net, x, res.adversarial, target, original);
      j["attack"] = "lbfgs";
      j["c"] = lcfg.c;
      j["iterations"] = details.iterations;
      j["objective"] = details.value;
      j["noise_l2"] = l2_norm(res.noise);
      save_image(res.adversarial, out_image);
      write_json(j, out_report);
      return j["success"].get<bool>() ? exit_ok : exit_attack_failed;
    }

    if (sweep->parsed()) {
      const Tensor x = detail::load_input(net, image);
      const SweepResult result =
          run_if_sweep(net, x, target, detail::parse_if_list(if_list), lcfg);
      std::ostringstream csv;
      write_sweep_csv(result, csv);
      write_text_file(out_csv, csv.str());
      if (!out_json.empty())
        write_json(to_json(result), out_json);
      return exit_ok;
    }

    if (check->parsed()) {
      std::mt19937 gen(gopt.seed);
      // Without an image, check around mid-grey noise: full-range noise
      // drives image classifiers into a saturated softmax, where the
      // gradient vanishes and the comparison says nothing.
      const Tensor x = image.empty()
                           ? random_uniform(net.input_shape(), 0.4f, 0.6f, gen)
                           : detail::load_input(net, image);
      const auto cls = std::min(
          net.num_classes() - 1,
          static_cast<std::size_t>(unit_uniform(gen) *
                                   static_cast<float>(net.num_classes())));
      const auto res = check_gradients(net, x, cls, gopt);
      out << nlohmann::json{{"checked", res.checked},
                            {"skipped_kinks", res.skipped_kinks},
                            {"failures", res.failures},
                            {"max_rel_error", res.max_rel_error},
                            {"max_componentwise_error",
                             res.max_componentwise_error},
                            {"gradient_scale", res.scale},
                            {"tolerance", gopt.tolerance},
                            {"passed", res.passed()}}
                 .dump(2)
          << '\n';
      return res.passed() && res.checked == gopt.probes ? exit_ok
                                                        : exit_attack_failed;
    }
  } catch (const std::exception &e) {
    err << "error: " << e.what() << '\n';
    return exit_usage;
  }
  return exit_usage;
}

} // namespace trisec

#endif // TRISEC_CLI_HPP
