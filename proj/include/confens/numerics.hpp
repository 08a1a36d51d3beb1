#ifndef CONFENS_NUMERICS_HPP
#define CONFENS_NUMERICS_HPP

// Score arithmetic shared by training, selection and the inference cascade.
//
// A classifier emits a LogitVector; softmax turns it into a ProbabilityVector.
// The confidence of a prediction is summarized by the uncertainty score
//
//     U(p) = min(max p, 1 - max p)
//
// i.e. the distance of the top probability to the closer end of [0, 1].
// U lies in [0, 0.5]; 0.5 is maximal unconfidence.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "confens/errors.hpp"

namespace confens {

template <typename Scalar>
using VectorT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Vector = VectorT<double>;

template <typename Scalar>
constexpr Scalar probability_sum_tolerance() {
    // 1e-9 for double; single precision cannot resolve that.
    return std::max(Scalar(1e-9), Scalar(64) * std::numeric_limits<Scalar>::epsilon());
}

template <typename Derived>
void check_logits(const Eigen::MatrixBase<Derived>& logits) {
    if (logits.size() < 2)
        throw InvalidInput("logit vector needs at least 2 classes, got " + std::to_string(logits.size()));
    if (!logits.allFinite())
        throw InvalidInput("logit vector contains non-finite entries");
}

// Normalized per-class scores. Construct through softmax() or from_values();
// the latter validates range and normalization.
template <typename Scalar>
class ProbabilityVectorT {
public:
    using Values = VectorT<Scalar>;

    static ProbabilityVectorT from_values(Values values) {
        if (values.size() < 2)
            throw InvalidInput("probability vector needs at least 2 classes");
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            const Scalar v = values[i];
            if (!(v >= Scalar(0) && v <= Scalar(1)))
                throw InvalidInput("probability entry " + std::to_string(i) + " outside [0, 1]");
        }
        if (std::abs(values.sum() - Scalar(1)) > probability_sum_tolerance<Scalar>())
            throw InvalidInput("probability vector does not sum to 1");
        return ProbabilityVectorT(std::move(values));
    }

    const Values& values() const noexcept { return values_; }
    Eigen::Index size() const noexcept { return values_.size(); }
    Scalar operator[](Eigen::Index i) const { return values_[i]; }

private:
    explicit ProbabilityVectorT(Values values) : values_(std::move(values)) {}

    template <typename Derived>
    friend ProbabilityVectorT<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>&);

    Values values_;
};

using ProbabilityVector = ProbabilityVectorT<double>;

// Max-shifted so that large logits never overflow.
template <typename Derived>
ProbabilityVectorT<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
    using Scalar = typename Derived::Scalar;
    check_logits(logits);
    VectorT<Scalar> e = (logits.array() - logits.maxCoeff()).exp().matrix();
    e /= e.sum();
    return ProbabilityVectorT<Scalar>(std::move(e));
}

template <typename Scalar>
Scalar distance_to_zero(const ProbabilityVectorT<Scalar>& p) {
    return p.values().maxCoeff();
}

template <typename Scalar>
Scalar distance_to_one(const ProbabilityVectorT<Scalar>& p) {
    return Scalar(1) - p.values().maxCoeff();
}

template <typename Scalar>
Scalar uncertainty(const ProbabilityVectorT<Scalar>& p) {
    return std::min(distance_to_zero(p), distance_to_one(p));
}

// Lowest index wins ties.
template <typename Scalar>
int argmax_class(const ProbabilityVectorT<Scalar>& p) {
    const auto& v = p.values();
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return static_cast<int>(best);
}

struct Prediction {
    int class_index = 0;
    double top_probability = 0.0;
    double uncertainty = 0.5;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

template <typename Scalar>
Prediction make_prediction(const ProbabilityVectorT<Scalar>& p) {
    const double top = static_cast<double>(distance_to_zero(p));
    return Prediction{argmax_class(p), top, std::min(top, 1.0 - top)};
}

}  // namespace confens

#endif  // CONFENS_NUMERICS_HPP
