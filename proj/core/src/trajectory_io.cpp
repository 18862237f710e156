#include "mtu/optimizer.hpp"

#include <array>
#include <charconv>
#include <ostream>

namespace mtu {

std::string format_double(double x) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return {buf.data(), res.ptr};
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const bool with_dev = !traj.steps.empty() && traj.steps.front().deviation.has_value();
  out << "t,grad_norm,loss,divergence,clip_scale";
  if (with_dev) out << ",deviation";
  out << '\n';
  for (const auto& s : traj.steps) {
    out << s.t;
    for (double x : {s.grad_norm, s.loss, s.divergence, s.clip_scale}) out << ',' << format_double(x);
    if (with_dev) out << ',' << format_double(s.deviation.value_or(0.0));
    out << '\n';
  }
}

}  // namespace mtu
