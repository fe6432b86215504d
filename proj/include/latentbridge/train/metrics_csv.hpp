// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>

#include "latentbridge/core/error.hpp"

namespace lb::train {

// Per-phase training log. One fixed schema for every phase so downstream
// tooling can concatenate them: iteration, total, four loss terms, the two
// modulation weights (after sigmoid; zero when the phase has none), lr.
class MetricsCsv {
public:
    MetricsCsv() = default;

    explicit MetricsCsv(const std::filesystem::path& path) { open(path); }

    void open(const std::filesystem::path& path) {
        std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
        os_.open(path);
        check(os_.good(), ErrorKind::io, "cannot write metrics csv: " + path.string());
        os_.precision(17);  // round-trippable doubles; keeps total == sum(terms) auditable
        os_ << "iteration,total,term0,term1,term2,term3,alpha_gamma,alpha_beta,lr\n";
    }

    void row(int64_t iteration, double total, double t0, double t1, double t2, double t3,
             double alpha_gamma, double alpha_beta, double lr) {
        if (!os_.is_open()) return;
        os_ << iteration << ',' << total << ',' << t0 << ',' << t1 << ',' << t2 << ',' << t3 << ','
            << alpha_gamma << ',' << alpha_beta << ',' << lr << '\n';
    }

    void flush() {
        if (os_.is_open()) os_.flush();
    }

private:
    std::ofstream os_;
};

}  // namespace lb::train
