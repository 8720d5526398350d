#ifndef BMVAE_ERRORS_HPP_
#define BMVAE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace bmvae
{

// Bad shapes, infeasible graph specs, malformed sampler specs.
class invalid_argument_error : public std::invalid_argument
{
  public:
  using std::invalid_argument::invalid_argument;
};

// Exact enumeration requested beyond its size guard.
class capacity_error : public std::length_error
{
  public:
  using std::length_error::length_error;
};

// Value outside the range a fit or inversion can attain.
class out_of_range_error : public std::out_of_range
{
  public:
  using std::out_of_range::out_of_range;
};

// Malformed external file (IDX, PNM, samples, config).
class format_error : public std::runtime_error
{
  public:
  using std::runtime_error::runtime_error;
};

class corrupt_checkpoint_error : public std::runtime_error
{
  public:
  using std::runtime_error::runtime_error;
};

// Checkpoint written by an incompatible (usually newer) format version.
class checkpoint_version_error : public corrupt_checkpoint_error
{
  public:
  using corrupt_checkpoint_error::corrupt_checkpoint_error;
};

namespace detail
{

inline void require(bool condition, const std::string& message)
{
  if (!condition)
    throw invalid_argument_error(message);
}

} // namespace detail
} // namespace bmvae

#endif
