#include "dopf/comms.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dopf {

namespace {

// Loss draws live at an element index no payload can reach, so they never
// collide with per-element corruption draws on the same stream.
constexpr std::uint64_t kLossElement = ~0ull;

std::uint64_t bits(double v) { return std::bit_cast<std::uint64_t>(v); }

void require_probability(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw std::invalid_argument(std::string(name) + " must be in [0, 1], got " +
                                std::to_string(v));
  }
}

}  // namespace

const char* to_string(ChannelKind k) {
  switch (k) {
    case ChannelKind::ideal: return "ideal";
    case ChannelKind::gaussian: return "gaussian";
    case ChannelKind::bad_data: return "bad_data";
    case ChannelKind::intermittent_loss: return "intermittent_loss";
  }
  return "?";
}

ChannelKind channel_kind_from_string(std::string_view s) {
  if (s == "ideal") return ChannelKind::ideal;
  if (s == "gaussian") return ChannelKind::gaussian;
  if (s == "bad_data") return ChannelKind::bad_data;
  if (s == "intermittent_loss" || s == "loss") {
    return ChannelKind::intermittent_loss;
  }
  throw std::invalid_argument("unknown channel kind '" + std::string(s) + "'");
}

void ChannelModel::check() const {
  switch (kind) {
    case ChannelKind::ideal:
      break;
    case ChannelKind::gaussian:
      if (!(sigma_noise >= 0.0)) {
        throw std::invalid_argument("sigma_noise must be >= 0, got " +
                                    std::to_string(sigma_noise));
      }
      break;
    case ChannelKind::bad_data:
      if (!(r_max >= 0.0)) {
        throw std::invalid_argument("r_max must be >= 0, got " +
                                    std::to_string(r_max));
      }
      require_probability(p_bad, "p_bad");
      break;
    case ChannelKind::intermittent_loss:
      require_probability(lambda_f, "lambda_f");
      require_probability(lambda_r, "lambda_r");
      break;
  }
}

std::uint64_t ChannelModel::content_hash() const {
  switch (kind) {
    case ChannelKind::ideal:
      return derive_seed({0});
    case ChannelKind::gaussian:
      return derive_seed({1, bits(sigma_noise)});
    case ChannelKind::bad_data:
      return derive_seed({2, bits(r_max), bits(p_bad)});
    case ChannelKind::intermittent_loss:
      return derive_seed({3, bits(lambda_f), bits(lambda_r)});
  }
  return 0;
}

void init_link(LinkState& link, std::uint64_t seed, std::uint64_t stream,
               const Eigen::VectorXd& initial_payload) {
  link.rng = CounterRng(seed, stream);
  link.loss_state = 1;
  link.last_good = initial_payload;
  link.initialized = true;
}

Eigen::VectorXd apply_gaussian(const Eigen::VectorXd& values, double sigma,
                               const CounterRng& rng,
                               std::uint64_t iteration) {
  if (!(sigma >= 0.0)) {
    throw std::invalid_argument("apply_gaussian: sigma must be >= 0, got " +
                                std::to_string(sigma));
  }
  if (sigma == 0.0) return values;
  Eigen::VectorXd out = values;
  for (Eigen::Index e = 0; e < out.size(); ++e) {
    out(e) += sigma * rng.normal(iteration, static_cast<std::uint64_t>(e), 0);
  }
  return out;
}

Eigen::VectorXd apply_bad_data(const Eigen::VectorXd& values, double r_max,
                               double p_bad, const CounterRng& rng,
                               std::uint64_t iteration) {
  require_probability(p_bad, "p_bad");
  if (p_bad == 0.0) return values;
  Eigen::VectorXd out = values;
  for (Eigen::Index e = 0; e < out.size(); ++e) {
    const double u2 = rng.uniform(iteration, static_cast<std::uint64_t>(e), 0);
    if (u2 < p_bad) {
      const double u1 =
          rng.uniform(iteration, static_cast<std::uint64_t>(e), 1);
      out(e) += 2.0 * r_max * (u1 - 0.5);
    }
  }
  return out;
}

int step_loss_channel(int s, double lambda_f, double lambda_r,
                      const CounterRng& rng, std::uint64_t iteration) {
  require_probability(lambda_f, "lambda_f");
  require_probability(lambda_r, "lambda_r");
  const double u = rng.uniform(iteration, kLossElement, 0);
  if (s == 1) return u < lambda_f ? 0 : 1;
  return u < lambda_r ? 1 : 0;
}

Eigen::VectorXd transmit(LinkState& link, const Eigen::VectorXd& values,
                         const ChannelModel& model, std::uint64_t iteration,
                         Eigen::Index corrupt_prefix) {
  if (!link.initialized) {
    throw std::logic_error("transmit: link not initialized");
  }
  if (corrupt_prefix < 0 || corrupt_prefix > values.size()) {
    throw std::invalid_argument("transmit: corrupt_prefix " +
                                std::to_string(corrupt_prefix) +
                                " out of range for payload of size " +
                                std::to_string(values.size()));
  }
  if (link.last_good.size() != values.size()) {
    throw std::invalid_argument("transmit: payload size changed from " +
                                std::to_string(link.last_good.size()) +
                                " to " + std::to_string(values.size()));
  }
  switch (model.kind) {
    case ChannelKind::ideal:
      return values;
    case ChannelKind::gaussian: {
      Eigen::VectorXd out = values;
      out.head(corrupt_prefix) = apply_gaussian(
          values.head(corrupt_prefix), model.sigma_noise, link.rng, iteration);
      return out;
    }
    case ChannelKind::bad_data: {
      Eigen::VectorXd out = values;
      out.head(corrupt_prefix) =
          apply_bad_data(values.head(corrupt_prefix), model.r_max, model.p_bad,
                         link.rng, iteration);
      return out;
    }
    case ChannelKind::intermittent_loss: {
      link.loss_state = step_loss_channel(link.loss_state, model.lambda_f,
                                          model.lambda_r, link.rng, iteration);
      if (link.loss_state == 1) {
        link.last_good = values;
        return values;
      }
      return link.last_good;
    }
  }
  return values;
}

}  // namespace dopf
