#pragma once

// Brute-force references shared by the tests. Deliberately naive: every
// structured quantity is rebuilt from actor sets, never from library code.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <random>
#include <vector>

namespace pxtest {

using Index = std::ptrdiff_t;

struct Pair {
    Index i, j;
};

// Column-wise upper triangle, enumerated by nested loops.
inline std::vector<Pair> enumerate_pairs(Index n) {
    std::vector<Pair> out;
    for (Index j = 1; j < n; ++j)
        for (Index i = 0; i < j; ++i) out.push_back({i, j});
    return out;
}

inline int shared_actors(Pair a, Pair b) {
    return (a.i == b.i) + (a.i == b.j) + (a.j == b.i) + (a.j == b.j);
}

// c1 S1 + c2 S2 + c3 S3 built entry by entry.
inline Eigen::MatrixXd dense_s(double c1, double c2, double c3, Index n) {
    const auto p = enumerate_pairs(n);
    const auto N = static_cast<Index>(p.size());
    Eigen::MatrixXd M(N, N);
    for (Index a = 0; a < N; ++a) {
        for (Index b = 0; b < N; ++b) {
            const int s = shared_actors(p[a], p[b]);
            M(a, b) = s == 2 ? c1 : s == 1 ? c2 : c3;
        }
    }
    return M;
}

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

// One-dimensional adaptive Simpson, used to build integration oracles.
inline double simpson(const std::function<double(double)>& f, double a, double b, double tol, int depth = 50) {
    struct Rec {
        const std::function<double(double)>& f;
        double run(double a, double b, double fa, double fm, double fb, double whole, double tol, int depth) const {
            const double m = 0.5 * (a + b);
            const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
            const double flm = f(lm), frm = f(rm);
            const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
                return left + right + (left + right - whole) / 15.0;
            }
            return run(a, m, fa, flm, fm, left, tol / 2, depth - 1) + run(m, b, fm, frm, fb, right, tol / 2, depth - 1);
        }
    };
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return Rec{f}.run(a, b, fa, fm, fb, whole, tol, depth);
}

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("pxnet_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(path_ / name) << text;
        return file(name);
    }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }
inline double Phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace pxtest
