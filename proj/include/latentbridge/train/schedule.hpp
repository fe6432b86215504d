// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <sstream>
#include <vector>

#include "latentbridge/core/error.hpp"
#include "latentbridge/core/rng.hpp"

namespace lb::train {

// Denoising steps the inversion networks train across. Must span the
// text-dominant early region (>= 0.8 T) and the structure-dominant late
// region (<= 0.2 T).
struct StepSchedule {
    std::vector<int> steps;  // sorted descending

    void validate(int total_steps) const {
        check(!steps.empty(), ErrorKind::validation, "step schedule is empty");
        for (size_t i = 0; i < steps.size(); ++i) {
            check(steps[i] >= 0 && steps[i] <= total_steps, ErrorKind::range,
                  "schedule step out of range: " + std::to_string(steps[i]));
            if (i > 0)
                check(steps[i] < steps[i - 1], ErrorKind::validation,
                      "schedule steps must be strictly descending");
        }
        check(steps.front() * 5 >= 4 * total_steps, ErrorKind::validation,
              "schedule needs an early step >= 0.8*T");
        check(steps.back() * 5 <= total_steps, ErrorKind::validation,
              "schedule needs a late step <= 0.2*T");
    }

    int sample(Rng& rng) const { return steps[rng.below(steps.size())]; }

    static StepSchedule default_for(int total_steps) {
        StepSchedule s;
        s.steps = {total_steps, (3 * total_steps + 2) / 4, total_steps / 2, total_steps / 4, 0};
        s.validate(total_steps);
        return s;
    }

    static StepSchedule parse(const std::string& text, int total_steps) {
        StepSchedule s;
        std::istringstream is(text);
        int v;
        while (is >> v) s.steps.push_back(v);
        s.validate(total_steps);
        return s;
    }

    std::string to_string() const {
        std::string out;
        for (size_t i = 0; i < steps.size(); ++i)
            out += (i ? " " : "") + std::to_string(steps[i]);
        return out;
    }
};

}  // namespace lb::train
