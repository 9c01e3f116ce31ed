#pragma once

// Plain-text reports: "key = value" lines followed by an optional
// whitespace-separated table. Reals use %.17g so reports round-trip exactly
// and identical runs produce identical bytes.

#include <string>
#include <utility>
#include <vector>

#include "kdiqa/pipeline.hpp"

namespace kdiqa {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

std::string format_real(double v);

std::string format_run_report(const RunReport& report, const KeyValues& extra = {});
std::string format_ablation_summary(const AblationReport& report, const KeyValues& extra = {});

/// Parses the "key = value" header of a report (table rows are skipped).
KeyValues parse_report_header(const std::string& text);

}  // namespace kdiqa
