#include "gwr/geo.hpp"

#include <cmath>

#include "gwr/errors.hpp"

namespace gwr {

namespace {

// WGS-84
constexpr double kSemiMajorM = 6378137.0;
constexpr double kFlattening = 1.0 / 298.257223563;
constexpr double kSemiMinorM = kSemiMajorM * (1.0 - kFlattening);
// IUGG mean radius, used only by the great-circle fallback.
constexpr double kMeanRadiusM = 6371008.8;

constexpr double kDegToRad = 3.141592653589793238462643383279502884 / 180.0;

}  // namespace

bool GeoPoint::valid() const {
    return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
           lon >= -180.0 && lon <= 180.0;
}

void validate_point(const GeoPoint& p) {
    if (!p.valid()) {
        throw InvalidInput("GeoPoint out of range: lat=" + std::to_string(p.lat) +
                           " lon=" + std::to_string(p.lon));
    }
}

void KernelConfig::validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidInput("kernel sigma must be > 0");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidInput("kernel epsilon must be > 0");
}

std::optional<double> vincenty_miles(const GeoPoint& a_in, const GeoPoint& b_in) {
    if (a_in.lat == b_in.lat && a_in.lon == b_in.lon) return 0.0;

    // canonical argument order makes d(a,b) and d(b,a) run the identical
    // instruction sequence, so symmetry holds bitwise
    const bool swap = b_in.lat < a_in.lat || (b_in.lat == a_in.lat && b_in.lon < a_in.lon);
    const GeoPoint& a = swap ? b_in : a_in;
    const GeoPoint& b = swap ? a_in : b_in;

    const double phi1 = a.lat * kDegToRad;
    const double phi2 = b.lat * kDegToRad;
    const double big_l = (b.lon - a.lon) * kDegToRad;

    const double u1 = std::atan((1.0 - kFlattening) * std::tan(phi1));
    const double u2 = std::atan((1.0 - kFlattening) * std::tan(phi2));
    const double sin_u1 = std::sin(u1), cos_u1 = std::cos(u1);
    const double sin_u2 = std::sin(u2), cos_u2 = std::cos(u2);

    double lambda = big_l;
    double sin_sigma = 0.0, cos_sigma = 0.0, sigma = 0.0;
    double cos_sq_alpha = 0.0, cos_2sigma_m = 0.0;

    bool converged = false;
    for (int iter = 0; iter < 200; ++iter) {
        const double sin_lambda = std::sin(lambda);
        const double cos_lambda = std::cos(lambda);
        const double t1 = cos_u2 * sin_lambda;
        const double t2 = cos_u1 * sin_u2 - sin_u1 * cos_u2 * cos_lambda;
        sin_sigma = std::sqrt(t1 * t1 + t2 * t2);
        if (sin_sigma == 0.0) return 0.0;  // coincident points
        cos_sigma = sin_u1 * sin_u2 + cos_u1 * cos_u2 * cos_lambda;
        sigma = std::atan2(sin_sigma, cos_sigma);
        const double sin_alpha = cos_u1 * cos_u2 * sin_lambda / sin_sigma;
        cos_sq_alpha = 1.0 - sin_alpha * sin_alpha;
        // equatorial line: cos^2(alpha) = 0
        cos_2sigma_m = cos_sq_alpha != 0.0 ? cos_sigma - 2.0 * sin_u1 * sin_u2 / cos_sq_alpha : 0.0;
        const double c =
            kFlattening / 16.0 * cos_sq_alpha * (4.0 + kFlattening * (4.0 - 3.0 * cos_sq_alpha));
        const double lambda_prev = lambda;
        lambda = big_l + (1.0 - c) * kFlattening * sin_alpha *
                             (sigma + c * sin_sigma *
                                          (cos_2sigma_m +
                                           c * cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m)));
        if (std::abs(lambda - lambda_prev) < 1e-12) {
            converged = true;
            break;
        }
    }
    if (!converged) return std::nullopt;

    const double u_sq = cos_sq_alpha * (kSemiMajorM * kSemiMajorM - kSemiMinorM * kSemiMinorM) /
                        (kSemiMinorM * kSemiMinorM);
    const double big_a =
        1.0 + u_sq / 16384.0 * (4096.0 + u_sq * (-768.0 + u_sq * (320.0 - 175.0 * u_sq)));
    const double big_b = u_sq / 1024.0 * (256.0 + u_sq * (-128.0 + u_sq * (74.0 - 47.0 * u_sq)));
    const double delta_sigma =
        big_b * sin_sigma *
        (cos_2sigma_m + big_b / 4.0 *
                            (cos_sigma * (-1.0 + 2.0 * cos_2sigma_m * cos_2sigma_m) -
                             big_b / 6.0 * cos_2sigma_m * (-3.0 + 4.0 * sin_sigma * sin_sigma) *
                                 (-3.0 + 4.0 * cos_2sigma_m * cos_2sigma_m)));

    const double meters = kSemiMinorM * big_a * (sigma - delta_sigma);
    return meters / kMetersPerMile;
}

double great_circle_miles(const GeoPoint& a_in, const GeoPoint& b_in) {
    const bool swap = b_in.lat < a_in.lat || (b_in.lat == a_in.lat && b_in.lon < a_in.lon);
    const GeoPoint& a = swap ? b_in : a_in;
    const GeoPoint& b = swap ? a_in : b_in;
    const double phi1 = a.lat * kDegToRad;
    const double phi2 = b.lat * kDegToRad;
    const double dlon = (b.lon - a.lon) * kDegToRad;
    double c = std::sin(phi1) * std::sin(phi2) + std::cos(phi1) * std::cos(phi2) * std::cos(dlon);
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return kMeanRadiusM * std::acos(c) / kMetersPerMile;
}

double geodesic_miles(const GeoPoint& a, const GeoPoint& b, bool* fell_back) {
    if (fell_back) *fell_back = false;
    if (auto d = vincenty_miles(a, b)) return *d;
    if (fell_back) *fell_back = true;
    return great_circle_miles(a, b);
}

double similarity(double distance_miles, const KernelConfig& cfg) {
    if (!(distance_miles >= 0.0) || !std::isfinite(distance_miles)) {
        throw InvalidInput("similarity: distance must be finite and >= 0");
    }
    const double two_sigma_sq = 2.0 * cfg.sigma * cfg.sigma;
    switch (cfg.form) {
        case KernelForm::PaperLiteral:
            return std::exp(-distance_miles / two_sigma_sq);
        case KernelForm::SquaredExponential:
        default:
            return std::exp(-distance_miles * distance_miles / two_sigma_sq);
    }
}

}  // namespace gwr
