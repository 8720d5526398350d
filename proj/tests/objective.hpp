#ifndef BMVAE_TESTS_OBJECTIVE_HPP_
#define BMVAE_TESTS_OBJECTIVE_HPP_

// Deterministic (mean-path) batch objective, written out directly for finite-difference
// checks of the training gradients. log Z is left out: it does not depend on the networks.

#include "bmvae/training.hpp"

namespace oracle
{

inline double mean_path_objective(const bmvae::ModelState& s, const bmvae::Matrix& x, double lambda)
{
  using namespace bmvae;
  const Matrix head = mlp_forward(s.encoder, x).output;
  const int k = s.latent_dim();
  double total = 0.0;
  for (Eigen::Index b = 0; b < x.cols(); ++b)
  {
    Vector z;
    double kl = 0.0;
    if (s.kind == PriorKind::bm_vae)
    {
      const Vector mu = head.col(b);
      z = mu.unaryExpr([](double v) { return std::tanh(v / 2.0); });
      kl = expected_energy(mu, *s.prior) - posterior_entropy(mu);
    }
    else
    {
      const GaussianPosterior gp(head.col(b).head(k), head.col(b).tail(k));
      z = gp.mean;
      kl = gaussian_kl(gp);
    }
    const Vector xhat = mlp_forward(s.decoder, z).output.col(0);
    total += bce_loss(x.col(b), xhat) + lambda * kl;
  }
  return total / static_cast<double>(x.cols());
}

} // namespace oracle

#endif
