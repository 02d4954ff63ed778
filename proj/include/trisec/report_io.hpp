//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TRISEC_REPORT_IO_HPP
#define TRISEC_REPORT_IO_HPP

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <string>

#include <json.hpp>

#include "trisec/attack.hpp"
#include "trisec/baselines.hpp"
#include "trisec/errors.hpp"
#include "trisec/tensor.hpp"

namespace trisec {

inline nlohmann::json tensor_to_json(const Tensor &t) {
  return {{"shape", t.shape()}, {"values", t.values()}};
}

inline nlohmann::json to_json(const TraceRecord &r) {
  return {{"iter", r.iter},
          {"inner_iters", r.inner_iters},
          {"total_inner_iters", r.total_inner_iters},
          {"cost", r.cost},
          {"cr", r.cr},
          {"ssi", r.ssi},
          {"predicted_class", r.predicted_class},
          {"target_confidence", r.target_confidence},
          {"rescale", r.rescale}};
}

inline nlohmann::json to_json(const AttackReport &r) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto &rec : r.trace)
    trace.push_back(to_json(rec));
  nlohmann::json j = {
      {"success", r.success},
      {"target_class", r.target_class},
      {"original_class", r.original_class},
      {"original_confidence", r.original_confidence},
      {"iterations_run", r.iterations_run},
      {"inner_iterations_total", r.inner_iterations_total},
      {"post_quantization_success", r.post_quantization_success},
      {"post_quantization_class", r.post_quantization_class},
      {"trace", std::move(trace)},
      {"final_perturbation", tensor_to_json(r.final_perturbation)},
      {"final_adversarial_image", tensor_to_json(r.final_adversarial_image)}};
  if (!r.trace.empty()) {
    const auto &last = r.trace.back();
    j["final"] = {{"cost", last.cost},
                  {"cr", last.cr},
                  {"ssi", last.ssi},
                  {"predicted_class", last.predicted_class},
                  {"target_confidence", last.target_confidence}};
  }
  return j;
}

inline nlohmann::json to_json(const SweepResult &s) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto &r : s.rows)
    rows.push_back({{"if", r.imperceptibility_factor},
                    {"attack", r.attack},
                    {"success", r.success},
                    {"cr", r.cr},
                    {"ssi", r.ssi},
                    {"predicted_class", r.predicted_class},
                    {"target_confidence", r.target_confidence}});
  return {{"original_class", s.original_class},
          {"target_class", s.target_class},
          {"rows", std::move(rows)}};
}

/// CSV with header if,attack,success,cr,ssi,predicted_class,target_confidence.
inline void write_sweep_csv(const SweepResult &s, std::ostream &out) {
  out << "if,attack,success,cr,ssi,predicted_class,target_confidence\n";
  out << std::setprecision(17);
  for (const auto &r : s.rows)
    out << r.imperceptibility_factor << ',' << r.attack << ','
        << (r.success ? "true" : "false") << ',' << r.cr << ',' << r.ssi << ','
        << r.predicted_class << ',' << r.target_confidence << '\n';
}

inline void write_text_file(const std::filesystem::path &path,
                            const std::string &text) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + path.string());
  out << text;
  if (!out)
    throw IoError("write failed for " + path.string());
}

inline void write_json(const nlohmann::json &j,
                       const std::filesystem::path &path) {
  write_text_file(path, j.dump(2) + "\n");
}

} // namespace trisec

#endif // TRISEC_REPORT_IO_HPP
