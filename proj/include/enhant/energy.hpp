#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace enhant {

// Bit-level radio parameters as entered in the config. Bit energies are in
// microjoules per bit; everything downstream of derive_costs works in mJ.
struct RawEnergyParams {
  double send_bit_energy_uj = 0;
  double receive_bit_energy_uj = 0;
  double data_packet_bits = 0;
  double control_packet_bits = 0;
  double data_header_bits = 0;
  double control_header_bits = 0;
  double equiv_detection_bits = 0;
};

// Per-event costs in mJ.
struct EnergyCostModel {
  double data_tx = 0;            // transmit one data packet
  double data_rx = 0;            // receive one data packet
  double data_fwd = 0;           // receive and retransmit (data_rx + data_tx)
  double status_tx = 0;          // send one status report
  double control_rx = 0;         // receive one command packet
  double header_rx = 0;          // overhear a data header and discard
  double control_header_rx = 0;  // overhear a control header (includes idle_detect)
  double idle_detect = 0;        // idle assessment of a control transmission
  double min_reserve = 0;        // status_tx + control_rx; keeps control traffic possible
};

inline EnergyCostModel derive_costs(const RawEnergyParams& raw) {
  const double* fields[] = {&raw.send_bit_energy_uj,  &raw.receive_bit_energy_uj,
                            &raw.data_packet_bits,    &raw.control_packet_bits,
                            &raw.data_header_bits,    &raw.control_header_bits,
                            &raw.equiv_detection_bits};
  for (const double* f : fields)
    if (*f < 0) throw std::invalid_argument("energy parameters must be non-negative");

  const double uj_to_mj = 1.0 / 1000.0;
  EnergyCostModel c;
  c.data_tx = raw.send_bit_energy_uj * raw.data_packet_bits * uj_to_mj;
  c.data_rx = raw.receive_bit_energy_uj * raw.data_packet_bits * uj_to_mj;
  c.data_fwd = c.data_tx + c.data_rx;
  c.status_tx = raw.send_bit_energy_uj * raw.control_packet_bits * uj_to_mj;
  c.control_rx = raw.receive_bit_energy_uj * raw.control_packet_bits * uj_to_mj;
  c.header_rx = raw.receive_bit_energy_uj * raw.data_header_bits * uj_to_mj;
  c.idle_detect = raw.receive_bit_energy_uj * raw.equiv_detection_bits * uj_to_mj;
  c.control_header_rx =
      raw.receive_bit_energy_uj * raw.control_header_bits * uj_to_mj + c.idle_detect;
  c.min_reserve = c.status_tx + c.control_rx;
  return c;
}

// Per-slot harvest: either a constant rate or a trace cycled by slot index.
struct HarvestSource {
  double rate = 0;
  std::vector<double> trace;

  double at(long slot) const {
    if (trace.empty()) return rate;
    return trace[static_cast<std::size_t>(slot) % trace.size()];
  }
};

struct NodeEnergy {
  double level = 0;
  double b_max = 0;
  double initial = 0;
};

inline void harvest_step(NodeEnergy& n, const HarvestSource& h, long slot) {
  n.level = std::min(n.level + h.at(slot), n.b_max);
}

enum class SpendResult { Spent, Refused };

// All-or-nothing spend: goes through only when the level stays strictly
// above the floor afterwards.
inline SpendResult try_spend(NodeEnergy& n, double amount, double floor) {
  if (n.level > amount + floor) {
    n.level -= amount;
    return SpendResult::Spent;
  }
  return SpendResult::Refused;
}

}  // namespace enhant
