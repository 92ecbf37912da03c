#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "pglab/config.hpp"
#include "pglab/diagnostics.hpp"
#include "pglab/store.hpp"

namespace pglab {

nlohmann::json to_json(const Statistic& s);
nlohmann::json to_json(const stats::KsResult& ks, double p_threshold = 0.01);

/// Sections computed elsewhere that the report should embed (manifold runs).
struct ReportExtras {
    const DirichletGof* dirichlet = nullptr;
    const ScalingReport* scaling = nullptr;
};

/// Full diagnostics report: top-level keys `meta`, `balancedness`,
/// `dirichlet`, `moments`, `conformity`, `covariance`, `marginals`. Sections
/// not requested are omitted; sections that do not apply to the run carry
/// `not_applicable: true`. `meta.all_pass` is the conjunction of section
/// verdicts.
nlohmann::json build_report(const RunConfig& cfg, const SampleStore& store, const Dataset& train,
                            const std::vector<std::string>& sections,
                            const ReportExtras& extras = {});

bool report_all_pass(const nlohmann::json& report);

}  // namespace pglab
