// SPDX-License-Identifier: Apache-2.0

//! Control and status registers known to the reference model.

use serde::{Deserialize, Serialize};

macro_rules! csrs {
    ($($variant:ident = $addr:literal, $name:literal;)*) => {
        /// A supported CSR. The variant order fixes coverage indices.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum Csr {
            $($variant,)*
        }

        impl Csr {
            pub const ALL: &'static [Csr] = &[$(Csr::$variant,)*];

            pub const fn addr(self) -> u16 {
                match self {
                    $(Csr::$variant => $addr,)*
                }
            }

            pub const fn name(self) -> &'static str {
                match self {
                    $(Csr::$variant => $name,)*
                }
            }

            pub fn from_addr(addr: u16) -> Option<Csr> {
                match addr {
                    $($addr => Some(Csr::$variant),)*
                    _ => None,
                }
            }

            pub fn from_name(name: &str) -> Option<Csr> {
                match name {
                    $($name => Some(Csr::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

csrs! {
    Sstatus = 0x100, "sstatus";
    Sie = 0x104, "sie";
    Stvec = 0x105, "stvec";
    Sscratch = 0x140, "sscratch";
    Sepc = 0x141, "sepc";
    Scause = 0x142, "scause";
    Stval = 0x143, "stval";
    Sip = 0x144, "sip";
    Satp = 0x180, "satp";
    Mstatus = 0x300, "mstatus";
    Misa = 0x301, "misa";
    Medeleg = 0x302, "medeleg";
    Mideleg = 0x303, "mideleg";
    Mie = 0x304, "mie";
    Mtvec = 0x305, "mtvec";
    Mscratch = 0x340, "mscratch";
    Mepc = 0x341, "mepc";
    Mcause = 0x342, "mcause";
    Mtval = 0x343, "mtval";
    Mip = 0x344, "mip";
    Pmpcfg0 = 0x3a0, "pmpcfg0";
    Pmpaddr0 = 0x3b0, "pmpaddr0";
    Mhartid = 0xf14, "mhartid";
}

impl Csr {
    pub fn index(self) -> usize {
        self as usize
    }

    /// Lowest privilege level allowed to access the register (address bits 9:8).
    pub fn min_privilege(self) -> u8 {
        ((self.addr() >> 8) & 0b11) as u8
    }

    /// Address bits 11:10 == 0b11 mark a read-only register.
    pub fn is_read_only(self) -> bool {
        (self.addr() >> 10) & 0b11 == 0b11
    }
}

impl std::fmt::Display for Csr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addr_and_name_lookups_are_inverse() {
        for &c in Csr::ALL {
            assert_eq!(Csr::from_addr(c.addr()), Some(c));
            assert_eq!(Csr::from_name(c.name()), Some(c));
        }
        assert_eq!(Csr::from_name("hstatus"), None);
    }

    #[test]
    fn privilege_fields() {
        assert_eq!(Csr::Sip.min_privilege(), 1);
        assert_eq!(Csr::Mstatus.min_privilege(), 3);
        assert!(Csr::Mhartid.is_read_only());
        assert!(!Csr::Mip.is_read_only());
    }
}
