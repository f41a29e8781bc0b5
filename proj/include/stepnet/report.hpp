#pragma once

// JSON views of metrics and cross-validation results.

#include <string>
#include <vector>

#include "json.hpp"
#include "stepnet/counting.hpp"
#include "stepnet/model.hpp"

namespace stepnet {

inline nlohmann::ordered_json to_json(const MetricsReport& r) {
  return {{"subject_id", r.subject_id},
          {"n_right_correct", r.n_right_correct},
          {"n_left_correct", r.n_left_correct},
          {"n_total", r.n_total},
          {"steps_predicted", r.steps_predicted},
          {"steps_ground_truth", r.steps_ground_truth},
          {"accuracy_class", r.accuracy_class},
          {"accuracy_steps", r.accuracy_steps}};
}

inline MetricsReport metrics_from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.subject_id = j.at("subject_id").get<std::string>();
  r.n_right_correct = j.at("n_right_correct").get<std::size_t>();
  r.n_left_correct = j.at("n_left_correct").get<std::size_t>();
  r.n_total = j.at("n_total").get<std::size_t>();
  r.steps_predicted = j.at("steps_predicted").get<std::size_t>();
  r.steps_ground_truth = j.at("steps_ground_truth").get<std::size_t>();
  r.accuracy_class = j.at("accuracy_class").get<double>();
  r.accuracy_steps = j.at("accuracy_steps").get<double>();
  return r;
}

/// Per-subject entries plus medians of both metrics.
inline nlohmann::ordered_json aggregate_json(const std::vector<MetricsReport>& reports) {
  nlohmann::ordered_json subjects = nlohmann::ordered_json::array();
  std::vector<double> c, s;
  for (const auto& r : reports) {
    subjects.push_back(to_json(r));
    c.push_back(r.accuracy_class);
    s.push_back(r.accuracy_steps);
  }
  nlohmann::ordered_json j;
  j["subjects"] = subjects;
  if (!reports.empty()) {
    j["median_accuracy_class"] = median(c);
    j["median_accuracy_steps"] = median(s);
  }
  return j;
}

inline nlohmann::ordered_json to_json(const CVReport& cv) {
  nlohmann::ordered_json folds = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < cv.folds.size(); ++k) {
    const auto& f = cv.folds[k];
    nlohmann::ordered_json reports = nlohmann::ordered_json::array();
    for (const auto& r : f.reports) reports.push_back(to_json(r));
    folds.push_back({{"fold", k},
                     {"test_subjects", f.test_subjects},
                     {"train_subjects", f.train_subjects},
                     {"median_accuracy_class", f.median_accuracy_class},
                     {"median_accuracy_steps", f.median_accuracy_steps},
                     {"epoch_loss", f.epoch_loss},
                     {"subjects", reports}});
  }
  nlohmann::ordered_json per_subject = nlohmann::ordered_json::array();
  for (const auto& r : cv.per_subject()) {
    auto e = to_json(r);
    per_subject.push_back(e);
  }
  return {{"folds", folds},
          {"per_subject", per_subject},
          {"mean_of_medians_accuracy_class", cv.mean_of_medians_class},
          {"mean_of_medians_accuracy_steps", cv.mean_of_medians_steps},
          {"best_fold", cv.best_fold}};
}

}  // namespace stepnet
