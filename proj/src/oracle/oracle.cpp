#include "lmmsel/oracle.hpp"

#include <bit>
#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "lmmsel/error.hpp"

namespace lmmsel::oracle {

namespace {

constexpr int kPasses = 3;
// Shrinkage stays inside the support; smaller supports cover the boundary.
constexpr double kMinScale = 1e-3;
constexpr int kGridPoints = 64;
constexpr int kGoldenIters = 80;

// Minimizes g on [lo, hi]: grid scan, then golden section in the bracket
// around the best grid point.
double minimize_1d(const std::function<double(double)>& g, double lo, double hi) {
    if (hi < lo) std::swap(lo, hi);
    double best_t = lo, best_v = g(lo);
    const double h = (hi - lo) / kGridPoints;
    for (int i = 1; i <= kGridPoints; ++i) {
        const double t = lo + i * h;
        const double v = g(t);
        if (v < best_v) {
            best_v = v;
            best_t = t;
        }
    }
    double a = std::max(lo, best_t - h), b = std::min(hi, best_t + h);
    const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = g(x1), f2 = g(x2);
    for (int it = 0; it < kGoldenIters; ++it) {
        if (f1 < f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = g(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = g(x2);
        }
    }
    const double t = f1 < f2 ? x1 : x2;
    return std::min(f1, f2) < best_v ? t : best_t;
}

Matrix pseudo_inverse(const Matrix& A) {
    if (A.size() == 0) return A;
    return Eigen::CompleteOrthogonalDecomposition<Matrix>(A).pseudoInverse();
}

Matrix dense_z(const LongitudinalDataset& ds) {
    const int n = ds.total_rows(), q = ds.random_dim(), N = ds.num_subjects();
    Matrix Z = Matrix::Zero(n, N * q);
    for (int i = 0; i < N; ++i) Z.block(ds.row_offset(i), i * q, ds.subject(i).Z.rows(), q) = ds.subject(i).Z;
    return Z;
}

Matrix dense_x(const LongitudinalDataset& ds) {
    Matrix X(ds.total_rows(), ds.fixed_dim());
    for (int i = 0; i < ds.num_subjects(); ++i) X.middleRows(ds.row_offset(i), ds.subject(i).X.rows()) = ds.subject(i).X;
    return X;
}

Vector dense_y(const LongitudinalDataset& ds) {
    Vector y(ds.total_rows());
    for (int i = 0; i < ds.num_subjects(); ++i) y.segment(ds.row_offset(i), ds.subject(i).y.size()) = ds.subject(i).y;
    return y;
}

// Zero-variance candidates carry no precision and are excluded from the search.
std::vector<bool> zero_variance(const ProxyConfig& cfg, int q, int n) {
    const Matrix M = cfg.resolve(q, n);
    const double top = q > 0 ? M.diagonal().maxCoeff() : 0.0;
    std::vector<bool> z(q);
    for (int k = 0; k < q; ++k) z[k] = !(M(k, k) > 1e-12 * top);
    return z;
}

Matrix proxy_inverse(const ProxyConfig& cfg, int q, int n) {
    if (cfg.kind == ProxyKind::LogNIdentity) return Matrix::Identity(q, q) / std::log(static_cast<double>(n));
    const Matrix M = cfg.resolve(q, n);
    const auto zero = zero_variance(cfg, q, n);
    Matrix P = M;
    for (int k = 0; k < q; ++k)
        if (zero[k]) {
            P.row(k).setZero();
            P.col(k).setZero();
        }
    return pseudo_inverse(P);
}

// Quadratic model 1/2 c0 - b^T x + 1/2 x^T H x plus a separable penalty.
struct Quadratic {
    Matrix H;
    Vector b;
    double c0 = 0.0;
    double smooth(const Vector& x) const { return 0.5 * c0 - b.dot(x) + 0.5 * x.dot(H * x); }
};

// Newton direction with a Levenberg shift: H + mu*I is made positive definite
// so that concave pieces of the penalty still yield a descent direction.
Vector damped_newton_step(const Matrix& H, const Vector& grad) {
    const auto m = H.rows();
    double mu = 0.0;
    const double floor = 1e-10 * std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    for (int attempt = 0; attempt < 200; ++attempt) {
        Eigen::LLT<Matrix> llt(H + mu * Matrix::Identity(m, m));
        if (llt.info() == Eigen::Success) return llt.solve(grad);
        mu = std::max(2.0 * mu, floor);
    }
    return grad;
}

} // namespace

Matrix dense_proxy_precision(const LongitudinalDataset& ds, const ProxyConfig& cfg) {
    const int n = ds.total_rows();
    const Matrix Z = dense_z(ds);
    const Matrix M = cfg.resolve(ds.random_dim(), n);
    Matrix bigM = Matrix::Zero(Z.cols(), Z.cols());
    for (int i = 0; i < ds.num_subjects(); ++i)
        bigM.block(i * ds.random_dim(), i * ds.random_dim(), ds.random_dim(), ds.random_dim()) = M;
    const Matrix C = Matrix::Identity(n, n) + Z * bigM * Z.transpose();
    return C.ldlt().solve(Matrix::Identity(n, n));
}

Matrix dense_fixed_projector(const Matrix& X) {
    const auto n = X.rows();
    if (X.cols() == 0) return Matrix::Identity(n, n);
    return Matrix::Identity(n, n) - X * pseudo_inverse(X);
}

double fixed_objective(const LongitudinalDataset& ds, const Matrix& P, const PenaltySpec& spec, const Vector& beta) {
    const Vector r = dense_y(ds) - dense_x(ds) * beta;
    double pen = 0.0;
    for (Eigen::Index j = 0; j < beta.size(); ++j) pen += spec.value(std::abs(beta(j)));
    return 0.5 * r.dot(P * r) + ds.total_rows() * pen;
}

double random_objective(const LongitudinalDataset& ds, const Matrix& Px, const Matrix& Minv, const PenaltySpec& spec,
                        const Vector& gamma) {
    const int N = ds.num_subjects(), q = ds.random_dim();
    const Vector r = dense_y(ds) - dense_z(ds) * gamma;
    double ridge = 0.0;
    for (int i = 0; i < N; ++i) ridge += gamma.segment(i * q, q).dot(Minv * gamma.segment(i * q, q));
    double pen = 0.0;
    for (int k = 0; k < q; ++k) {
        double s = 0.0;
        for (int i = 0; i < N; ++i) s += gamma(i * q + k) * gamma(i * q + k);
        pen += spec.value(std::sqrt(s));
    }
    return 0.5 * r.dot(Px * r) + 0.5 * ridge + ds.total_rows() * pen;
}

SubsetOracleResult subset_oracle_fixed(const LongitudinalDataset& ds, const ProxyConfig& proxy,
                                       const PenaltySpec& spec, int max_d) {
    spec.validate();
    const int d = ds.fixed_dim();
    if (d > max_d || d > 8) throw DomainError("subset oracle limited to d <= 8");
    const int n = ds.total_rows();
    const Matrix P = dense_proxy_precision(ds, proxy);
    const Matrix X = dense_x(ds);
    const Vector y = dense_y(ds);
    Quadratic Q{X.transpose() * P * X, X.transpose() * (P * y), y.dot(P * y)};

    auto objective = [&](const Vector& beta) {
        double pen = 0.0;
        for (int j = 0; j < d; ++j) pen += spec.value(std::abs(beta(j)));
        return Q.smooth(beta) + n * pen;
    };

    SubsetOracleResult best;
    best.objective = std::numeric_limits<double>::infinity();
    // Masks ordered by size so ties keep the smaller support.
    std::vector<unsigned> masks(1u << d);
    for (unsigned m = 0; m < masks.size(); ++m) masks[m] = m;
    std::stable_sort(masks.begin(), masks.end(),
                     [](unsigned a, unsigned b) { return std::popcount(a) < std::popcount(b); });

    for (unsigned mask : masks) {
        IndexSet S;
        for (int j = 0; j < d; ++j)
            if (mask & (1u << j)) S.push_back(j);
        const auto s = static_cast<Eigen::Index>(S.size());
        Vector beta = Vector::Zero(d);
        if (s > 0) {
            Matrix A(s, s);
            Vector c(s);
            for (Eigen::Index a = 0; a < s; ++a) {
                c(a) = Q.b(S[a]);
                for (Eigen::Index b = 0; b < s; ++b) A(a, b) = Q.H(S[a], S[b]);
            }
            const Vector sol = pseudo_inverse(A) * c;
            Vector start = Vector::Zero(d);
            for (Eigen::Index a = 0; a < s; ++a) start(S[a]) = sol(a);
            beta = start;

            for (int pass = 0; pass < kPasses; ++pass) {
                for (int j : S) {
                    const double hjj = Q.H(j, j);
                    if (!(hjj > 0.0)) continue;
                    const double e = Q.b(j) - Q.H.row(j).dot(beta) + hjj * beta(j);
                    auto g = [&](double t) { return 0.5 * hjj * t * t - e * t + n * spec.value(std::abs(t)); };
                    const double lo = std::min({0.0, e / hjj, beta(j)});
                    const double hi = std::max({0.0, e / hjj, beta(j)});
                    const double t = minimize_1d(g, lo, hi);
                    if (g(t) <= g(beta(j))) beta(j) = t;
                }
            }

            // Newton polish on the smooth piece containing beta.
            auto polish = [&](Vector beta) {
            double current = objective(beta);
            for (int it = 0; it < 1000; ++it) {
                bool nonzero = true;
                for (int j : S) nonzero = nonzero && beta(j) != 0.0;
                if (!nonzero) break;
                Vector grad(s);
                Matrix hess(s, s);
                for (Eigen::Index a = 0; a < s; ++a) {
                    const int j = S[a];
                    const double t = std::abs(beta(j));
                    const double sg = beta(j) > 0.0 ? 1.0 : -1.0;
                    grad(a) = Q.H.row(j).dot(beta) - Q.b(j) + n * spec.derivative(t) * sg;
                    for (Eigen::Index b = 0; b < s; ++b) hess(a, b) = Q.H(j, S[b]);
                    hess(a, a) += n * spec.second_derivative(t);
                }
                const Vector step = damped_newton_step(hess, grad);
                bool improved = false;
                for (double scale = 1.0; scale > 1e-10; scale *= 0.5) {
                    Vector trial = beta;
                    for (Eigen::Index a = 0; a < s; ++a) trial(S[a]) -= scale * step(a);
                    const double v = objective(trial);
                    if (v < current) {
                        beta = trial;
                        improved = current - v > 1e-15 * std::max(1.0, std::abs(v));
                        current = v;
                        break;
                    }
                }
                if (!improved) break;
            }
            return beta;
            };
            beta = polish(beta);

            // The concave penalty admits several minima per support: restart
            // with every subset of coordinates placed inside the lasso piece.
            const double small = std::max(0.5 * spec.lambda, 1e-6);
            for (unsigned p = 1; p < (1u << s); ++p) {
                Vector trial = start;
                for (Eigen::Index a = 0; a < s; ++a)
                    if (p & (1u << a)) trial(S[a]) = start(S[a]) < 0.0 ? -small : small;
                trial = polish(trial);
                if (objective(trial) < objective(beta)) beta = trial;
            }
        }
        const double value = objective(beta);
        if (value < best.objective - 1e-12 * std::max(1.0, std::abs(value))) {
            best.objective = value;
            best.estimate = beta;
            best.support = S;
        }
    }
    return best;
}

SubsetOracleResult group_subset_oracle(const LongitudinalDataset& ds, const ProxyConfig& proxy,
                                       const PenaltySpec& spec, int max_q) {
    spec.validate();
    const int q = ds.random_dim();
    if (q > max_q || q > 5) throw DomainError("group subset oracle limited to q <= 5");
    const int n = ds.total_rows();
    const int N = ds.num_subjects();
    const Matrix Px = dense_fixed_projector(dense_x(ds));
    const Matrix Z = dense_z(ds);
    const Vector y = dense_y(ds);
    const Matrix Minv = proxy_inverse(proxy, q, n);
    Quadratic Q{Z.transpose() * Px * Z, Z.transpose() * (Px * y), y.dot(Px * y)};
    for (int i = 0; i < N; ++i) Q.H.block(i * q, i * q, q, q) += Minv;

    auto norm_of = [&](const Vector& g, int k) {
        double s = 0.0;
        for (int i = 0; i < N; ++i) s += g(i * q + k) * g(i * q + k);
        return std::sqrt(s);
    };
    auto objective = [&](const Vector& g) {
        double pen = 0.0;
        for (int k = 0; k < q; ++k) pen += spec.value(norm_of(g, k));
        return Q.smooth(g) + n * pen;
    };

    SubsetOracleResult best;
    best.objective = std::numeric_limits<double>::infinity();
    std::vector<unsigned> masks(1u << q);
    for (unsigned m = 0; m < masks.size(); ++m) masks[m] = m;
    std::stable_sort(masks.begin(), masks.end(),
                     [](unsigned a, unsigned b) { return std::popcount(a) < std::popcount(b); });

    const auto zero = zero_variance(proxy, q, n);
    for (unsigned mask : masks) {
        bool admissible = true;
        for (int k = 0; k < q; ++k)
            if ((mask & (1u << k)) && zero[k]) admissible = false;
        if (!admissible) continue;
        IndexSet groups;
        std::vector<int> coords;
        for (int k = 0; k < q; ++k)
            if (mask & (1u << k)) {
                groups.push_back(k);
                for (int i = 0; i < N; ++i) coords.push_back(i * q + k);
            }
        const auto m = static_cast<Eigen::Index>(coords.size());
        std::vector<Eigen::Index> position(N * q, -1);
        for (Eigen::Index a = 0; a < m; ++a) position[coords[a]] = a;
        Vector gamma = Vector::Zero(N * q);
        if (m > 0) {
            Matrix A(m, m);
            Vector c(m);
            for (Eigen::Index a = 0; a < m; ++a) {
                c(a) = Q.b(coords[a]);
                for (Eigen::Index b = 0; b < m; ++b) A(a, b) = Q.H(coords[a], coords[b]);
            }
            const Vector sol = pseudo_inverse(A) * c;
            for (Eigen::Index a = 0; a < m; ++a) gamma(coords[a]) = sol(a);
            const Vector start = gamma;

            // Proportional shrinkage of each group toward zero.
            for (int pass = 0; pass < kPasses; ++pass) {
                for (int k : groups) {
                    const Vector base = gamma;
                    auto g = [&](double scale) {
                        Vector t = base;
                        for (int i = 0; i < N; ++i) t(i * q + k) *= scale;
                        return objective(t);
                    };
                    const double s = minimize_1d(g, kMinScale, 1.5);
                    if (g(s) <= objective(gamma))
                        for (int i = 0; i < N; ++i) gamma(i * q + k) *= s;
                }
            }

            // Newton polish on the smoothed norms sqrt(r^2 + eps^2), continued
            // to eps = 0; smoothing lets a group leave zero along the right direction.
            auto smoothed = [&](const Vector& g, double eps) {
                double pen = 0.0;
                for (int k = 0; k < q; ++k) {
                    const double r = norm_of(g, k);
                    pen += spec.value(std::sqrt(r * r + eps * eps));
                }
                return Q.smooth(g) + n * pen;
            };
            auto polish = [&](Vector gamma) {
                for (double eps : {1e-2, 1e-3, 1e-4, 1e-6, 1e-8, 0.0}) {
                    double current = smoothed(gamma, eps);
                    for (int it = 0; it < 1000; ++it) {
                        bool nonzero = eps > 0.0;
                        if (!nonzero) {
                            nonzero = true;
                            for (int k : groups) nonzero = nonzero && norm_of(gamma, k) > 0.0;
                        }
                        if (!nonzero) break;
                        Vector grad(m);
                        Matrix hess(m, m);
                        for (Eigen::Index a = 0; a < m; ++a) {
                            grad(a) = Q.H.row(coords[a]).dot(gamma) - Q.b(coords[a]);
                            for (Eigen::Index b = 0; b < m; ++b) hess(a, b) = Q.H(coords[a], coords[b]);
                        }
                        for (int k : groups) {
                            const double r = norm_of(gamma, k);
                            const double rho = std::sqrt(r * r + eps * eps);
                            const double d1 = spec.derivative(rho), d2 = spec.second_derivative(rho);
                            Vector u(N);
                            for (int i = 0; i < N; ++i) u(i) = gamma(i * q + k) / rho;
                            for (int i = 0; i < N; ++i) {
                                const Eigen::Index a = position[i * q + k];
                                grad(a) += n * d1 * u(i);
                                for (int j = 0; j < N; ++j) {
                                    const Eigen::Index b = position[j * q + k];
                                    hess(a, b) += n * ((i == j ? d1 / rho : 0.0) + (d2 - d1 / rho) * u(i) * u(j));
                                }
                            }
                        }
                        const Vector step = damped_newton_step(hess, grad);
                        bool improved = false;
                        for (double scale = 1.0; scale > 1e-10; scale *= 0.5) {
                            Vector trial = gamma;
                            for (Eigen::Index a = 0; a < m; ++a) trial(coords[a]) -= scale * step(a);
                            const double v = smoothed(trial, eps);
                            if (v < current) {
                                gamma = trial;
                                improved = current - v > 1e-15 * std::max(1.0, std::abs(v));
                                current = v;
                                break;
                            }
                        }
                        if (!improved) break;
                    }
                }
                return gamma;
            };
            gamma = polish(gamma);

            // Restart with every subset of groups shrunk into the lasso piece.
            const double small = std::max(0.5 * spec.lambda, 1e-6);
            const auto g = static_cast<int>(groups.size());
            for (unsigned p = 1; p < (1u << g); ++p) {
                Vector trial = start;
                for (int a = 0; a < g; ++a) {
                    if (!(p & (1u << a))) continue;
                    const double r = norm_of(start, groups[a]);
                    if (!(r > 0.0)) continue;
                    for (int i = 0; i < N; ++i) trial(i * q + groups[a]) *= small / r;
                }
                trial = polish(trial);
                if (objective(trial) < objective(gamma)) gamma = trial;
            }
        }
        const double value = objective(gamma);
        if (value < best.objective - 1e-12 * std::max(1.0, std::abs(value))) {
            best.objective = value;
            best.estimate = gamma;
            best.support = groups;
        }
    }
    return best;
}

Vector finite_diff_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
    if (!(h > 0.0)) throw DomainError("finite difference step must be positive");
    Vector g(x.size());
    Vector xp = x, xm = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        xp(j) = x(j) + h;
        xm(j) = x(j) - h;
        g(j) = (f(xp) - f(xm)) / (2.0 * h);
        xp(j) = xm(j) = x(j);
    }
    return g;
}

} // namespace lmmsel::oracle
