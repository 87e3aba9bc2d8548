// Sanity check for the KDE mutual-information estimator: correlated Gaussians
// against the closed form -0.5 log(1 - rho^2).
#include <cmath>
#include <cstdio>

#include "mvlat/mvlat.hpp"

int main() {
    using namespace mvlat;
    const std::size_t n = 5000;
    Rng rng(1);
    for (double rho : {0.0, 0.5, 0.9}) {
        Mat x(n, 1), y(n, 1);
        for (std::size_t i = 0; i < n; ++i) {
            x(i, 0) = rng.normal();
            y(i, 0) = rho * x(i, 0) + std::sqrt(1.0 - rho * rho) * rng.normal();
        }
        const double est = kde_mi(x, y);
        const double exact = -0.5 * std::log(1.0 - rho * rho);
        std::printf("rho = %.1f: kde_mi = %7.4f, closed form = %7.4f\n", rho, est, exact);
    }
    return 0;
}
