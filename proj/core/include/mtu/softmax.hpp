#pragma once

#include "mtu/linalg.hpp"

namespace mtu {

/// log sum_j exp(h_j), shifted by the max for stability.
double logsumexp(const Vector& h);
/// log-sum-exp over every entry except `skip`.
double logsumexp_except(const Vector& h, Eigen::Index skip);
Vector softmax(const Vector& h);
double log_softmax_at(const Vector& h, Eigen::Index y);
/// S_h = Diag(sf(h)) - sf(h) sf(h)^T.
Matrix softmax_covariance(const Vector& h);
/// S_h * v without forming S_h.
Vector softmax_covariance_times(const Vector& p, const Vector& v);

}  // namespace mtu
