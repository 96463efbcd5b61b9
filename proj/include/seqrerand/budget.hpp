#pragma once

#include <cstddef>
#include <vector>

namespace seqrerand {

// Rerandomization budget split across the K groups of a sequential trial.
struct BudgetPlan {
    long total = 0;
    std::vector<long> per_group;
    long floor = 1;
    long cap_multiplier = 10;
};

// C_p = 2p * Gamma(p/2 + 1)^(2/p) / (p + 2)
double cp_constant(int p);

// Default per-group lower bound: 10 for large budgets, scaled down for small ones.
long default_floor(long total, std::size_t groups);

// Split a total budget across groups so most of it lands on the last group,
// following the recursion s_{k-1} ~ (C_p n_{k-1} s_k / (p n_k))^(p/(p+2)).
// Pass floor <= 0 to use default_floor. Group sizes matter only through ratios.
BudgetPlan allocate(long total, int p, const std::vector<long>& group_sizes,
                    long floor = -1);

// Acceptance threshold a_k for group k (1-based) given the accepted statistic
// from the previous groups; s_k == 1 means accept anything.
double threshold(int p, const std::vector<long>& group_sizes, int k, double m_prev,
                 long s_k);

}  // namespace seqrerand
