#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gengan/container.hpp"
#include "gengan/frontend.hpp"
#include "gengan/nn.hpp"

namespace gengan {

/// Binary gender attribute. Encoded male = 0.0, female = 1.0.
enum class Gender : std::uint8_t { male = 0, female = 1 };

inline double label_value(Gender g) { return g == Gender::female ? 1.0 : 0.0; }
char gender_code(Gender g);       // 'M' / 'F'
Gender parse_gender(char code);   // InvalidInput otherwise

inline constexpr double kSoftLabelMin = 0.01;
inline constexpr double kSoftLabelMax = 0.99;

struct SoftLabels {
  std::vector<double> values;  // clipped to [0.01, 0.99]
  std::vector<double> raw;     // Gaussian draws before clipping
};

/// n draws from N(mean, variance), clipped. `variance` is a variance, not a
/// standard deviation.
SoftLabels sample_soft_labels(std::size_t n, double mean, double variance, std::uint64_t seed);

// --- networks ---------------------------------------------------------------

struct GeneratorTopology {
  int bands = 80;
  int base_channels = 16;
  int depth = 4;  // stride-2 stages in the contracting path
  int kernel = 5;
  int noise_dim = 64;
};

struct DiscriminatorTopology {
  int bands = 80;
  int base_channels = 16;
  int blocks = 5;
  int kernel = 5;
};

/// U-Net over (N, bands, T) spectrograms, 1-D convolutions along time with
/// mel bands as channels. The conditioning label enters as one extra
/// constant input channel; the noise vector is broadcast over the bottleneck
/// and concatenated to the last contracting-path activation.
class Generator {
 public:
  Generator() = default;
  Generator(const GeneratorTopology& topo, std::uint64_t seed);

  /// `mel` is (N, bands, T) with T divisible by 2^depth; `noise` is
  /// (N, noise_dim); `cond` holds N conditioning labels.
  Tensor forward(const Tensor& mel, const Tensor& noise, std::span<const double> cond);
  /// Accumulates parameter gradients for dLoss/dOutput.
  void backward(const Tensor& d_out);

  std::vector<nn::Param*> params();
  const GeneratorTopology& topology() const { return topo_; }
  std::size_t time_multiple() const { return std::size_t{1} << topo_.depth; }

 private:
  GeneratorTopology topo_;
  std::vector<nn::Conv1d> enc_;
  std::vector<nn::LeakyRelu> enc_act_;
  std::vector<nn::Conv1d> dec_;  // dec_[i] produces level i
  std::vector<nn::LeakyRelu> dec_act_;
  nn::Conv1d head_;
  nn::Sigmoid squash_;
  std::vector<std::size_t> enc_width_;
};

/// Strided convolution stack, global average pooling over time, one linear
/// unit and a sigmoid: probability that the input is female-labelled.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(const DiscriminatorTopology& topo, std::uint64_t seed);

  std::vector<double> forward(const Tensor& mel);
  /// Accumulates parameter gradients and returns dLoss/dInput.
  Tensor backward(std::span<const double> d_prob);

  std::vector<nn::Param*> params();
  const DiscriminatorTopology& topology() const { return topo_; }

 private:
  DiscriminatorTopology topo_;
  std::vector<nn::Conv1d> convs_;
  std::vector<nn::LeakyRelu> acts_;
  nn::Linear out_;
  nn::Sigmoid squash_;
  std::size_t pooled_length_ = 0;
};

/// Standard-normal noise vector of length `dim`, deterministic in `seed`.
std::vector<double> sample_noise(std::size_t dim, std::uint64_t seed);

/// Full-length inference: pads T up to the generator's time multiple
/// (edge replication), runs the network and crops back. The model is copied,
/// so concurrent calls on one Generator are safe.
MelSpectrogram generate(const Generator& g, const MelSpectrogram& m, std::span<const double> noise,
                        double y_cond);
double discriminate(const Discriminator& d, const MelSpectrogram& m);

// --- losses -----------------------------------------------------------------

inline constexpr double kProbClamp = 1e-7;

/// Soft-target binary cross-entropy -[t ln p + (1-t) ln(1-p)], p clamped to
/// [1e-7, 1-1e-7].
double bce(double target, double prob);
/// d bce / d prob; zero where the clamp is active.
double bce_grad(double target, double prob);

struct LossBreakdown {
  double distortion = 0.0;   // L_d
  double adversarial = 0.0;  // L_a (generator) or real + fake (discriminator)
  double epsilon = 1.0;
  double total = 0.0;
  double real_term = 0.0;    // discriminator only
  double fake_term = 0.0;    // discriminator only
};

enum class GeneratorTarget { ground_truth, ambiguous };
std::string to_string(GeneratorTarget t);
GeneratorTarget parse_generator_target(const std::string& s);

/// L_G = MSE(m, m') + epsilon * BCE(target || y_f). With the literal
/// objective the target is the ground-truth label; the ambiguous variant
/// passes the synthetic soft label instead.
LossBreakdown generator_loss(std::span<const double> m, std::span<const double> m_prime,
                             double target, double y_f, double epsilon);
LossBreakdown generator_loss(const MelSpectrogram& m, const MelSpectrogram& m_prime, Gender y,
                             double y_f, double epsilon);

/// L_D = BCE(y || y_r) + BCE(y_n || y_f).
LossBreakdown discriminator_loss(double y, double y_r, double y_n, double y_f);

/// Batch forms: distortion averaged over every cell, cross-entropies
/// averaged over the batch.
LossBreakdown generator_loss_batch(const Tensor& m, const Tensor& m_prime,
                                   std::span<const double> targets, std::span<const double> y_f,
                                   double epsilon);
LossBreakdown discriminator_loss_batch(std::span<const double> y, std::span<const double> y_r,
                                       std::span<const double> y_n, std::span<const double> y_f);

// --- parameter (de)serialization --------------------------------------------

void store_params(TensorContainer& c, const std::string& prefix, const std::vector<nn::Param*>& ps);
/// CheckpointError naming the tensor when one is missing or mis-shaped.
void load_params(const TensorContainer& c, const std::string& prefix,
                 const std::vector<nn::Param*>& ps);

}  // namespace gengan
