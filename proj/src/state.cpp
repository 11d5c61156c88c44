#include "gridstate/state.hpp"

#include <algorithm>
#include <string>

#include "gridstate/errors.hpp"

namespace gridstate {

StateVector StateVector::flat(std::vector<int> buses, int reference_bus) {
  StateVector s;
  s.coordinates = Coordinates::Polar;
  s.first = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(buses.size()));
  s.second = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(buses.size()));
  s.buses = std::move(buses);
  s.reference_bus = reference_bus;
  return s;
}

Eigen::Index StateVector::index_of(int bus) const {
  const auto it = std::find(buses.begin(), buses.end(), bus);
  if (it == buses.end())
    throw ReferenceError("bus " + std::to_string(bus) + " is not in the state");
  return static_cast<Eigen::Index>(it - buses.begin());
}

bool StateVector::contains(int bus) const {
  return std::find(buses.begin(), buses.end(), bus) != buses.end();
}

std::complex<double> StateVector::phasor(Eigen::Index i) const {
  if (coordinates == Coordinates::Polar) return std::polar(first(i), second(i));
  return {first(i), second(i)};
}

StateVector StateVector::restricted(const std::vector<int>& subset) const {
  StateVector out;
  out.coordinates = coordinates;
  out.reference_bus = reference_bus;
  out.buses = subset;
  out.first.resize(static_cast<Eigen::Index>(subset.size()));
  out.second.resize(static_cast<Eigen::Index>(subset.size()));
  for (std::size_t k = 0; k < subset.size(); ++k) {
    const Eigen::Index i = index_of(subset[k]);
    out.first(static_cast<Eigen::Index>(k)) = first(i);
    out.second(static_cast<Eigen::Index>(k)) = second(i);
  }
  return out;
}

}  // namespace gridstate
