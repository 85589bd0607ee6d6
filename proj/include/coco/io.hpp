// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef COCO_IO_HPP
#define COCO_IO_HPP
#pragma once

#include "coco/harness.hpp"

#include <iomanip>
#include <ostream>
#include <sstream>

namespace coco {

// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_float(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

inline void write_trajectory_csv(std::ostream& out, const SimResult& result) {
    out << "t,user_id,arm,reward,regret_expected,regret_realized,mtr_expected\n";
    for (std::size_t i = 0; i < result.ledger.steps.size(); ++i) {
        const StepRecord& s = result.ledger.steps[i];
        const StepRecord& o = result.oracle_ledger.steps[i];
        const double mtr = s.true_mu[o.arm] - s.true_mu[s.arm];
        out << s.t << ',' << s.user_id << ',' << s.arm << ',' << format_float(s.reward) << ','
            << format_float(s.regret_expected) << ',' << format_float(s.regret_realized) << ','
            << format_float(mtr) << '\n';
    }
}

inline void write_eval_csv(std::ostream& out, const std::vector<EvalPoint>& points) {
    out << "round,avg_cum_bayes_regret\n";
    for (const EvalPoint& p : points)
        out << p.round << ',' << format_float(p.avg_cum_bayes_regret) << '\n';
}

}  // namespace coco

#endif  // COCO_IO_HPP
