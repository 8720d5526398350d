#ifndef BMVAE_MATH_HPP_
#define BMVAE_MATH_HPP_

#include <cmath>

namespace bmvae
{

inline double logistic(double x)
{
  if (x >= 0.0)
    return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(1 + e^x)
inline double softplus(double x)
{
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// The one sign convention for turning reals into spins: sign(0) = +1.
inline int spin_sign(double x)
{
  return x >= 0.0 ? 1 : -1;
}

} // namespace bmvae

#endif
