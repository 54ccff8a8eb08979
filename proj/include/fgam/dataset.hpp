#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace fgam {

// One subject: irregular observation times/values, a scalar response and
// optional offset covariates.  `u` always carries a leading 1 (intercept).
struct Subject {
    std::string id;
    Eigen::VectorXd t;  // increasing observation times
    Eigen::VectorXd x;  // noisy functional values at t
    double y = 0.0;
    bool has_response = true;
    Eigen::VectorXd u; // offset covariates, length p0
};

struct SparseFunctionalDataset {
    std::vector<Subject> subjects;
    int p0 = 1; // offset dimension including intercept

    int size() const { return static_cast<int>(subjects.size()); }
    long total_observations() const {
        long n = 0;
        for (const auto& s : subjects) n += s.t.size();
        return n;
    }
    // pooled observation time range
    void time_range(double& lo, double& hi) const;
    void validate() const; // throws DataError on structural problems
};

} // namespace fgam
