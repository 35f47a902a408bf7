#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "green_route/errors.hpp"
#include "green_route/game_model.hpp"

namespace green_route {

/// Halton sequence with a seeded Cranley-Patterson rotation.
///
/// Point n (n >= 1) in dimension d is the radical inverse of n in the d-th
/// prime base, shifted modulo 1 by a per-dimension offset drawn from the seed.
class HaltonSequence {
public:
    HaltonSequence(std::size_t dimension, std::uint64_t seed) : bases_(first_primes(dimension)) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        shifts_.resize(dimension);
        for (auto& s : shifts_) s = seed == 0 ? 0.0 : unit(rng);
    }

    [[nodiscard]] std::size_t dimension() const { return bases_.size(); }

    /// Coordinates strictly inside (0, 1).
    [[nodiscard]] std::vector<double> point(std::uint64_t index) const {
        std::vector<double> u(bases_.size());
        for (std::size_t d = 0; d < bases_.size(); ++d) {
            double v = radical_inverse(index + 1, bases_[d]) + shifts_[d];
            v -= std::floor(v);
            u[d] = std::clamp(v, 1e-12, 1.0 - 1e-12);
        }
        return u;
    }

private:
    static double radical_inverse(std::uint64_t n, std::uint64_t base) {
        double result = 0.0;
        double scale = 1.0 / static_cast<double>(base);
        while (n > 0) {
            result += static_cast<double>(n % base) * scale;
            n /= base;
            scale /= static_cast<double>(base);
        }
        return result;
    }

    static std::vector<std::uint64_t> first_primes(std::size_t count) {
        std::vector<std::uint64_t> primes;
        for (std::uint64_t candidate = 2; primes.size() < count; ++candidate) {
            bool prime = true;
            for (auto p : primes) {
                if (p * p > candidate) break;
                if (candidate % p == 0) {
                    prime = false;
                    break;
                }
            }
            if (prime) primes.push_back(candidate);
        }
        return primes;
    }

    std::vector<std::uint64_t> bases_;
    std::vector<double> shifts_;
};

/// Deterministic feasible profiles spread over the product of simplices.
/// Each player's row maps R+1 Halton coordinates through -log(u) and
/// normalizes, which sends the uniform cube to the uniform simplex.
class ProfileSampler {
public:
    ProfileSampler(const GameInstance& game, std::uint64_t seed)
        : game_(&game), sequence_(game.num_players() * (game.num_routes() + 1), seed) {}

    [[nodiscard]] FlowProfile sample(std::uint64_t index) const {
        const auto u = sequence_.point(index);
        const std::size_t n = game_->num_routes() + 1;
        FlowProfile x(game_->num_players(), game_->num_routes());
        for (std::size_t i = 0; i < game_->num_players(); ++i) {
            auto row = x.player(i);
            double sum = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                row[k] = -std::log(u[i * n + k]);
                sum += row[k];
            }
            const double demand = game_->player(i).demand;
            for (double& v : row) v = demand * v / sum;
        }
        return x;
    }

private:
    const GameInstance* game_;
    HaltonSequence sequence_;
};

}  // namespace green_route
