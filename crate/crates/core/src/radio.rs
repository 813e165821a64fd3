//! First-order radio energy model.
//!
//! Transmission costs `E_elec` per bit for the electronics plus an amplifier
//! term that is quadratic in distance below the crossover `d0` (free space)
//! and quartic above it (multipath fading). Reception costs `E_elec` per bit.
//! All quantities are `f64` joules, metres and bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Joules = f64;
pub type Meters = f64;
pub type Bits = f64;

/// How a cluster head's aggregate-and-forward cost is composed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChTxModel {
    /// `E_DA·B + E_tx(B, d)`: aggregation plus one ordinary transmission.
    #[default]
    Standard,
    /// `(E_elec + E_DA)·B + E_tx(B, d)`, which charges the electronics twice.
    /// Kept for sensitivity runs only.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioParams {
    /// J/bit for transmitter or receiver electronics.
    pub e_elec: f64,
    /// J/bit/m² free-space amplifier.
    pub e_fs: f64,
    /// J/bit/m⁴ multipath amplifier.
    pub e_amp: f64,
    /// J/bit for data aggregation at a cluster head.
    pub e_da: f64,
    /// Data packet size.
    pub b_data: Bits,
    /// Control packet size.
    pub b_ctrl: Bits,
    pub ch_tx_model: ChTxModel,
}

impl Default for RadioParams {
    /// The reference deployment: 50 nJ/bit, 10 pJ/bit/m², 0.0013 pJ/bit/m⁴,
    /// 5 nJ/bit aggregation, 4000-bit data and 1000-bit control packets.
    fn default() -> Self {
        Self {
            e_elec: 50e-9,
            e_fs: 10e-12,
            e_amp: 0.0013e-12,
            e_da: 5e-9,
            b_data: 4000.0,
            b_ctrl: 1000.0,
            ch_tx_model: ChTxModel::Standard,
        }
    }
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("e_elec", self.e_elec),
            ("e_fs", self.e_fs),
            ("e_amp", self.e_amp),
            ("e_da", self.e_da),
            ("b_data", self.b_data),
            ("b_ctrl", self.b_ctrl),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, format!("must be finite and > 0, got {v}")));
            }
        }
        let d0 = self.threshold_distance();
        if !(d0.is_finite() && d0 > 0.0) {
            return Err(Error::param("e_fs/e_amp", format!("crossover distance {d0} is not finite")));
        }
        Ok(())
    }

    /// Crossover distance `d0 = sqrt(E_fs / E_amp)` between the two amplifier regimes.
    pub fn threshold_distance(&self) -> Meters {
        (self.e_fs / self.e_amp).sqrt()
    }

    /// Free-space branch, valid for any distance but used only when `d <= d0`.
    pub fn tx_energy_free_space(&self, bits: Bits, d: Meters) -> Joules {
        self.e_elec * bits + self.e_fs * bits * d * d
    }

    /// Multipath branch, valid for any distance but used only when `d > d0`.
    pub fn tx_energy_multipath(&self, bits: Bits, d: Meters) -> Joules {
        let d2 = d * d;
        self.e_elec * bits + self.e_amp * bits * d2 * d2
    }

    /// Energy to transmit `bits` over `d` metres.
    pub fn tx_energy(&self, bits: Bits, d: Meters) -> Joules {
        if d <= self.threshold_distance() {
            self.tx_energy_free_space(bits, d)
        } else {
            self.tx_energy_multipath(bits, d)
        }
    }

    pub fn rx_energy(&self, bits: Bits) -> Joules {
        self.e_elec * bits
    }

    /// Reception cost at a cluster head for all of its members' packets.
    pub fn ch_rx_energy(&self, member_bits: &[Bits]) -> Joules {
        self.e_elec * member_bits.iter().sum::<f64>()
    }

    /// Aggregation plus forwarding of one packet to the base station.
    pub fn ch_tx_energy(&self, bits: Bits, d_bs: Meters) -> Joules {
        let aggregation = match self.ch_tx_model {
            ChTxModel::Standard => self.e_da * bits,
            ChTxModel::Literal => (self.e_elec + self.e_da) * bits,
        };
        aggregation + self.tx_energy(bits, d_bs)
    }

    /// Cost of receiving one control packet.
    pub fn control_rx_energy(&self) -> Joules {
        self.e_elec * self.b_ctrl
    }
}
