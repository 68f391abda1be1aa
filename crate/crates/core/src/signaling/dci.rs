//! DCI Format X_Y: the positioning trigger sent on the PDCCH.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PREAMBLE_INDEX_BITS: u32 = 6;
pub const UL_SUL_BITS: u32 = 1;
pub const SSB_INDEX_BITS: u32 = 6;
pub const PRACH_MASK_BITS: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RrcState {
    #[serde(rename = "NR_RRC_IDLE")]
    Idle,
    #[serde(rename = "NR_RRC_INACTIVE")]
    Inactive,
    #[serde(rename = "NR_RRC_CONNECTED")]
    Connected,
}

impl RrcState {
    pub fn supports_rtt(self) -> bool {
        matches!(self, RrcState::Inactive | RrcState::Connected)
    }
}

/// RNTI used to scramble the DCI CRC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scrambling {
    #[serde(rename = "P-RNTI")]
    PRnti,
    #[serde(rename = "C-RNTI")]
    CRnti,
}

impl Scrambling {
    pub fn as_str(self) -> &'static str {
        match self {
            Scrambling::PRnti => "P-RNTI",
            Scrambling::CRnti => "C-RNTI",
        }
    }
}

/// Inactive-mode UE identity: fullI-RNTI (40 bits) or shortI-RNTI (24 bits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum IRnti {
    Full(u64),
    Short(u32),
}

impl IRnti {
    pub fn bits(self) -> u32 {
        match self {
            IRnti::Full(_) => 40,
            IRnti::Short(_) => 24,
        }
    }

    pub fn value(self) -> u64 {
        match self {
            IRnti::Full(v) => v,
            IRnti::Short(v) => u64::from(v),
        }
    }

    fn zeroed(self) -> Self {
        match self {
            IRnti::Full(_) => IRnti::Full(0),
            IRnti::Short(_) => IRnti::Short(0),
        }
    }
}

/// Identifiers and static fields the gNB fills into each DCI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DciIds {
    pub i_rnti: IRnti,
    pub ul_sul: u8,
    pub ssb_index: u8,
    pub prach_mask: u8,
    /// Width of the SRS request field, 2 or 3.
    pub srs_request_bits: u8,
}

impl Default for DciIds {
    fn default() -> Self {
        Self {
            i_rnti: IRnti::Short(0x00_1234),
            ul_sul: 0,
            ssb_index: 0,
            prach_mask: 0,
            srs_request_bits: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DciFormatXY {
    pub i_rnti: IRnti,
    pub preamble_index: u8,
    pub ul_sul: u8,
    pub ssb_index: u8,
    pub prach_mask: u8,
    pub srs_request: u8,
    pub srs_request_bits: u8,
    pub scrambling: Scrambling,
}

fn check_width(name: &str, value: u64, bits: u32) -> Result<()> {
    if bits < 64 && value >> bits != 0 {
        return Err(Error::Encoding(format!("{name} = {value} does not fit in {bits} bits")));
    }
    Ok(())
}

/// Builds the DCI for a UE in `rrc`. Inactive UEs are addressed by I-RNTI
/// under P-RNTI scrambling; connected UEs get C-RNTI scrambling with the
/// I-RNTI field zeroed.
pub fn build_dci(rrc: RrcState, preamble: u8, srs_request: u8, ids: &DciIds) -> Result<DciFormatXY> {
    let (scrambling, i_rnti) = match rrc {
        RrcState::Idle => {
            return Err(Error::UnsupportedState(
                "RTT sessions need NR_RRC_INACTIVE or NR_RRC_CONNECTED".into(),
            ))
        }
        RrcState::Inactive => (Scrambling::PRnti, ids.i_rnti),
        RrcState::Connected => (Scrambling::CRnti, ids.i_rnti.zeroed()),
    };
    let dci = DciFormatXY {
        i_rnti,
        preamble_index: preamble,
        ul_sul: ids.ul_sul,
        ssb_index: ids.ssb_index,
        prach_mask: ids.prach_mask,
        srs_request,
        srs_request_bits: ids.srs_request_bits,
        scrambling,
    };
    dci.validate()?;
    Ok(dci)
}

impl DciFormatXY {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.srs_request_bits, 2 | 3) {
            return Err(Error::Encoding(format!(
                "SRS request width must be 2 or 3 bits, got {}",
                self.srs_request_bits
            )));
        }
        check_width("I-RNTI", self.i_rnti.value(), self.i_rnti.bits())?;
        check_width("preamble index", self.preamble_index.into(), PREAMBLE_INDEX_BITS)?;
        check_width("UL/SUL indicator", self.ul_sul.into(), UL_SUL_BITS)?;
        check_width("SS/PBCH index", self.ssb_index.into(), SSB_INDEX_BITS)?;
        check_width("PRACH mask index", self.prach_mask.into(), PRACH_MASK_BITS)?;
        check_width("SRS request", self.srs_request.into(), self.srs_request_bits.into())?;
        if self.scrambling == Scrambling::CRnti && self.i_rnti.value() != 0 {
            return Err(Error::Encoding("C-RNTI scrambled DCI must carry a zero I-RNTI".into()));
        }
        Ok(())
    }

    /// Payload size in bits.
    pub fn bit_len(&self) -> u32 {
        self.i_rnti.bits()
            + PREAMBLE_INDEX_BITS
            + UL_SUL_BITS
            + SSB_INDEX_BITS
            + PRACH_MASK_BITS
            + u32::from(self.srs_request_bits)
    }

    /// Packs the fields MSB-first in table order into the low `bit_len()` bits.
    pub fn encode(&self) -> Result<u64> {
        self.validate()?;
        let fields = [
            (self.i_rnti.value(), self.i_rnti.bits()),
            (self.preamble_index.into(), PREAMBLE_INDEX_BITS),
            (self.ul_sul.into(), UL_SUL_BITS),
            (self.ssb_index.into(), SSB_INDEX_BITS),
            (self.prach_mask.into(), PRACH_MASK_BITS),
            (self.srs_request.into(), u32::from(self.srs_request_bits)),
        ];
        Ok(fields.iter().fold(0u64, |acc, &(v, bits)| (acc << bits) | v))
    }

    /// Inverse of [`encode`](Self::encode). The I-RNTI and SRS-request widths
    /// are implied by the payload length.
    pub fn decode(payload: u64, bit_len: u32, scrambling: Scrambling) -> Result<Self> {
        let fixed = PREAMBLE_INDEX_BITS + UL_SUL_BITS + SSB_INDEX_BITS + PRACH_MASK_BITS;
        let (rnti_bits, srs_bits) = match bit_len.checked_sub(fixed) {
            Some(42) => (40, 2),
            Some(43) => (40, 3),
            Some(26) => (24, 2),
            Some(27) => (24, 3),
            _ => return Err(Error::Encoding(format!("no DCI X_Y layout has {bit_len} bits"))),
        };
        if bit_len < 64 && payload >> bit_len != 0 {
            return Err(Error::Encoding("payload wider than declared length".into()));
        }
        let mut rest = bit_len;
        let mut take = |bits: u32| {
            rest -= bits;
            (payload >> rest) & ((1u64 << bits) - 1)
        };
        let rnti = take(rnti_bits);
        let i_rnti = if rnti_bits == 40 { IRnti::Full(rnti) } else { IRnti::Short(rnti as u32) };
        let dci = DciFormatXY {
            i_rnti,
            preamble_index: take(PREAMBLE_INDEX_BITS) as u8,
            ul_sul: take(UL_SUL_BITS) as u8,
            ssb_index: take(SSB_INDEX_BITS) as u8,
            prach_mask: take(PRACH_MASK_BITS) as u8,
            srs_request: take(srs_bits) as u8,
            srs_request_bits: srs_bits as u8,
            scrambling,
        };
        dci.validate()?;
        Ok(dci)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn inactive_uses_p_rnti() {
        let dci = build_dci(RrcState::Inactive, 5, 1, &DciIds::default()).unwrap();
        assert_eq!(dci.scrambling, Scrambling::PRnti);
        assert_eq!(dci.preamble_index, 5);
        assert_eq!(dci.i_rnti, IRnti::Short(0x00_1234));
    }

    #[test]
    fn connected_zeroes_i_rnti() {
        let ids = DciIds {
            i_rnti: IRnti::Full(0xAB_CDEF_0123),
            ..DciIds::default()
        };
        let dci = build_dci(RrcState::Connected, 9, 2, &ids).unwrap();
        assert_eq!(dci.scrambling, Scrambling::CRnti);
        assert_eq!(dci.i_rnti, IRnti::Full(0));
        assert_eq!(dci.bit_len(), 40 + 6 + 1 + 6 + 4 + 2);
    }

    #[test]
    fn field_overflow() {
        let ids = DciIds::default();
        assert!(matches!(build_dci(RrcState::Connected, 64, 0, &ids), Err(Error::Encoding(_))));
        assert!(matches!(build_dci(RrcState::Connected, 1, 4, &ids), Err(Error::Encoding(_))));
        let three = DciIds {
            srs_request_bits: 3,
            ..ids
        };
        assert!(build_dci(RrcState::Connected, 1, 7, &three).is_ok());
        let bad_rnti = DciIds {
            i_rnti: IRnti::Short(1 << 24),
            ..ids
        };
        assert!(matches!(build_dci(RrcState::Inactive, 1, 0, &bad_rnti), Err(Error::Encoding(_))));
        let bad_width = DciIds {
            srs_request_bits: 4,
            ..ids
        };
        assert!(build_dci(RrcState::Connected, 1, 0, &bad_width).is_err());
    }

    #[test]
    fn idle_rejected() {
        assert!(matches!(
            build_dci(RrcState::Idle, 1, 1, &DciIds::default()),
            Err(Error::UnsupportedState(_))
        ));
    }

    #[test]
    fn known_packing() {
        let dci = DciFormatXY {
            i_rnti: IRnti::Short(0),
            preamble_index: 0b10_0001,
            ul_sul: 1,
            ssb_index: 0b00_0011,
            prach_mask: 0b1010,
            srs_request: 0b01,
            srs_request_bits: 2,
            scrambling: Scrambling::CRnti,
        };
        // 100001 1 000011 1010 01
        assert_eq!(dci.encode().unwrap(), 0b100001_1_000011_1010_01);
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(
            rnti in 0u64..(1 << 40),
            full in any::<bool>(),
            inactive in any::<bool>(),
            preamble in 0u8..64,
            ul_sul in 0u8..2,
            ssb in 0u8..64,
            mask in 0u8..16,
            three in any::<bool>(),
            srs in 0u8..4,
        ) {
            let ids = DciIds {
                i_rnti: if full { IRnti::Full(rnti) } else { IRnti::Short((rnti & 0xFF_FFFF) as u32) },
                ul_sul,
                ssb_index: ssb,
                prach_mask: mask,
                srs_request_bits: if three { 3 } else { 2 },
            };
            let rrc = if inactive { RrcState::Inactive } else { RrcState::Connected };
            let dci = build_dci(rrc, preamble, srs, &ids).unwrap();
            let bits = dci.encode().unwrap();
            let back = DciFormatXY::decode(bits, dci.bit_len(), dci.scrambling).unwrap();
            prop_assert_eq!(back, dci);
        }
    }
}
