#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string_view>

#include "dopf/rng.hpp"

namespace dopf {

enum class ChannelKind { ideal, gaussian, bad_data, intermittent_loss };

const char* to_string(ChannelKind k);
ChannelKind channel_kind_from_string(std::string_view s);

// Fault model of an inter-region link.  Only the fields of the active kind
// matter; the rest are ignored (and excluded from the content hash).
struct ChannelModel {
  ChannelKind kind = ChannelKind::ideal;
  double sigma_noise = 0.0;  // gaussian: noise std dev, radians
  double r_max = 2.0;        // bad_data: max error magnitude, radians
  double p_bad = 0.0;        // bad_data: per-element corruption probability
  double lambda_f = 0.0;     // loss: P(success -> fail) per iteration
  double lambda_r = 0.0;     // loss: P(fail -> success) per iteration

  void check() const;  // throws std::invalid_argument on out-of-range fields

  // Stable digest of kind + active parameters; equal-content models hash
  // equal, so run seeds derived from it survive sweep reordering.
  std::uint64_t content_hash() const;
};

// One direction of an inter-region channel.  The stream id keeps draws on
// different links independent; last_good backs the loss model's
// stale-payload behavior.
struct LinkState {
  int from_region = -1;
  int to_region = -1;
  CounterRng rng;
  int loss_state = 1;  // 1 = delivering, 0 = failed
  Eigen::VectorXd last_good;
  bool initialized = false;
};

// Key the link's stream and seed last_good with the values a receiver
// assumes before anything arrived (the k = 0 payload).
void init_link(LinkState& link, std::uint64_t seed, std::uint64_t stream,
               const Eigen::VectorXd& initial_payload);

// out_i = in_i + sigma * N(0,1), one normal per element addressed by
// (iteration, element).  sigma = 0 returns the input bit-identically
// without touching the stream.
Eigen::VectorXd apply_gaussian(const Eigen::VectorXd& values, double sigma,
                               const CounterRng& rng, std::uint64_t iteration);

// Per element: draw U2; with probability p_bad add 2 r_max (U1 - 0.5),
// uniform on [-r_max, r_max].  p_bad = 0 is bit-identity without draws.
Eigen::VectorXd apply_bad_data(const Eigen::VectorXd& values, double r_max,
                               double p_bad, const CounterRng& rng,
                               std::uint64_t iteration);

// One uniform draw per call: from s = 1 fail iff U < lambda_f, from s = 0
// recover iff U < lambda_r.
int step_loss_channel(int s, double lambda_f, double lambda_r,
                      const CounterRng& rng, std::uint64_t iteration);

// Push one message through the link.  Gaussian and bad-data corruption
// touch only the first corrupt_prefix entries (the angle block of an
// [angles | multipliers] payload); loss stales the whole message.  Returns
// what the receiver sees.
Eigen::VectorXd transmit(LinkState& link, const Eigen::VectorXd& values,
                         const ChannelModel& model, std::uint64_t iteration,
                         Eigen::Index corrupt_prefix);

}  // namespace dopf
