#pragma once

#include <optional>

namespace gwr {

inline constexpr double kMetersPerMile = 1609.344;

struct GeoPoint {
    double lat = 0.0;  // degrees, [-90, 90]
    double lon = 0.0;  // degrees, [-180, 180]

    bool valid() const;
};

// Throws InvalidInput when out of range or non-finite.
void validate_point(const GeoPoint& p);

enum class KernelForm {
    // exp(-d^2 / (2 sigma^2)), the standard RBF kernel. Default.
    SquaredExponential,
    // exp(-d / (2 sigma^2)). The printed form of the kernel in the source
    // material increases with distance, which contradicts its own description;
    // this mode keeps the printed expression with the sign corrected, for
    // comparison runs.
    PaperLiteral,
};

struct KernelConfig {
    double sigma = 0.5;    // kernel bandwidth, miles
    double epsilon = 5.0;  // edge distance threshold, miles
    KernelForm form = KernelForm::SquaredExponential;

    void validate() const;  // throws InvalidInput
};

// Geodesic distance on the WGS-84 ellipsoid (Vincenty inverse formula), in
// miles. Returns nullopt when the lambda iteration fails to converge, which
// happens only for nearly antipodal pairs.
std::optional<double> vincenty_miles(const GeoPoint& a, const GeoPoint& b);

// Spherical law of cosines on the IUGG mean Earth radius, miles.
double great_circle_miles(const GeoPoint& a, const GeoPoint& b);

// vincenty_miles with a great-circle fallback for non-convergent pairs.
// Antipodal pairs never matter at neighborhood scale, but distance queries
// must not fail. *fell_back (optional) is set accordingly.
double geodesic_miles(const GeoPoint& a, const GeoPoint& b, bool* fell_back = nullptr);

// Gaussian-kernel similarity of a distance, in (0, 1], decreasing in d,
// equal to 1 at d = 0.
double similarity(double distance_miles, const KernelConfig& cfg);

}  // namespace gwr
