// SPDX-License-Identifier: Apache-2.0

//! Single-step interpreter shared by the reference model and the device model.

use crate::isa::{decode, Csr, Decoded, Mnemonic};

use super::hooks::{cause, Cond, EdgeKind, LineSite, Observer, Quirks};
use super::state::{irq, mstatus, pmp, ArchState, Memory, Privilege, MEDELEG_WRITABLE};
use super::trace::{MemAccess, TraceEntry, TrapInfo};

use Mnemonic::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JumpKind {
    Jal,
    Jalr,
    Branch,
    Mret,
    Sret,
}

/// Control-flow effect of one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Next,
    Jump { target: u64, kind: JumpKind },
    Trap,
}

struct Exc {
    cause: u8,
    tval: u64,
}

fn exc(cause: u8, tval: u64) -> Exc {
    Exc { cause, tval }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Access {
    Read,
    Write,
    Exec,
}

#[derive(Clone, Copy)]
enum CsrOp {
    Write,
    Set,
    Clear,
}

struct Ctx<'a, O: Observer> {
    st: &'a mut ArchState,
    q: &'a Quirks,
    obs: &'a mut O,
    entry: TraceEntry,
}

/// Fetches, decodes and executes the word at `pc`.
pub fn step<O: Observer>(st: &mut ArchState, q: &Quirks, obs: &mut O, seq: u64) -> (TraceEntry, Flow) {
    let entry = TraceEntry { seq, pc: st.pc, word: 0, privilege: st.privilege, reg: None, mem: None, exception: None };
    let mut cx = Ctx { st, q, obs, entry };
    let from = cx.st.privilege;
    let mut mnemonic = None;
    let result = cx.fetch().and_then(|word| {
        cx.entry.word = word;
        let d = decode(word).map_err(|_| exc(cause::ILLEGAL, word as u64))?;
        mnemonic = Some(d.mnemonic);
        cx.execute(&d, word)
    });
    let flow = match result {
        Ok(flow) => flow,
        Err(e) => {
            cx.trap(e, mnemonic);
            Flow::Trap
        }
    };
    let to = cx.st.privilege;
    match flow {
        Flow::Next | Flow::Jump { kind: JumpKind::Jal | JumpKind::Jalr | JumpKind::Branch, .. } => {
            cx.obs.edge(from, to, EdgeKind::Normal);
        }
        Flow::Jump { .. } => cx.obs.edge(from, to, EdgeKind::TrapReturn),
        Flow::Trap => cx.obs.edge(from, to, EdgeKind::TrapEntry),
    }
    cx.st.xregs[0] = 0;
    (cx.entry, flow)
}

impl<O: Observer> Ctx<'_, O> {
    fn x(&self, r: u8) -> u64 {
        self.st.xregs[r as usize]
    }

    fn write_rd(&mut self, rd: u8, v: u64) {
        self.obs.cond(Cond::DestIsX0, rd == 0);
        if rd != 0 {
            self.st.set_x(rd, v);
            self.entry.reg = Some((rd, v));
        }
    }

    fn alu_rd(&mut self, rd: u8, v: u64) {
        self.obs.cond(Cond::AluZero, v == 0);
        self.write_rd(rd, v);
    }

    fn fetch(&mut self) -> Result<u32, Exc> {
        let pc = self.st.pc;
        let p = self.st.privilege;
        if !Memory::in_range(pc, 4) || !self.pmp_ok(pc, 4, p, Access::Exec) {
            return Err(exc(cause::INST_ACCESS, pc));
        }
        Ok(self.st.memory.read_le(pc, 4) as u32)
    }

    fn pmp_ok(&mut self, addr: u64, len: u64, p: Privilege, access: Access) -> bool {
        let cfg = (self.st.raw(Csr::Pmpcfg0) & 0xff) as u8;
        let a = (cfg >> pmp::A_SHIFT) & 3;
        let pa = (self.st.raw(Csr::Pmpaddr0) & pmp::ADDR_MASK) as u128;
        let range: Option<(u128, u128)> = match a {
            pmp::TOR => Some((0, pa << 2)),
            pmp::NA4 => Some((pa << 2, (pa << 2) + 4)),
            pmp::NAPOT => {
                let t = pa.trailing_ones();
                if t >= 54 {
                    Some((0, 1u128 << 64))
                } else {
                    let base = (pa & !((1u128 << t) - 1)) << 2;
                    Some((base, base + (1u128 << (t + 3))))
                }
            }
            _ => None,
        };
        let (lo, hi) = (addr as u128, addr as u128 + len as u128);
        let (overlap, contained) = match range {
            Some((rlo, rhi)) => (lo < rhi && hi > rlo, lo >= rlo && hi <= rhi),
            None => (false, false),
        };
        self.obs.cond(Cond::PmpMatch, overlap);
        if !overlap {
            return p == Privilege::M;
        }
        let locked = cfg & pmp::L != 0;
        self.obs.cond(Cond::PmpLocked, locked);
        let perm = match access {
            Access::Read => pmp::R,
            Access::Write => pmp::W,
            Access::Exec => pmp::X,
        };
        let allow = contained && ((p == Privilege::M && !locked) || cfg & perm != 0);
        self.obs.cond(Cond::PmpAllow, allow);
        allow
    }

    fn data_privilege(&mut self) -> Privilege {
        if self.st.privilege == Privilege::M {
            let mprv = self.st.status_bit(mstatus::MPRV);
            self.obs.cond(Cond::Mprv, mprv);
            if mprv {
                return self.st.mpp();
            }
        }
        self.st.privilege
    }

    fn big_endian(&mut self, p: Privilege) -> bool {
        let be = match p {
            Privilege::M => self.st.status_bit(mstatus::MBE) && !self.q.mbe_ignored,
            Privilege::S => self.st.status_bit(mstatus::SBE) && !self.q.sbe_ignored,
            Privilege::U => self.st.status_bit(mstatus::UBE),
        };
        self.obs.cond(Cond::BigEndian(p), be);
        be
    }

    fn check_data(&mut self, addr: u64, width: u64, store: bool) -> Result<Privilege, Exc> {
        let aligned = addr % width == 0;
        self.obs.cond(Cond::Aligned { store, width: width as u8 }, aligned);
        let (mis, acc) = if store {
            (cause::STORE_MISALIGNED, cause::STORE_ACCESS)
        } else {
            (cause::LOAD_MISALIGNED, cause::LOAD_ACCESS)
        };
        if !aligned {
            return Err(exc(mis, addr));
        }
        let in_range = Memory::in_range(addr, width);
        self.obs.cond(if store { Cond::StoreInRange } else { Cond::LoadInRange }, in_range);
        if !in_range {
            return Err(exc(acc, addr));
        }
        let p = self.data_privilege();
        let access = if store { Access::Write } else { Access::Read };
        if !self.pmp_ok(addr, width, p, access) {
            return Err(exc(acc, addr));
        }
        Ok(p)
    }

    fn load(&mut self, addr: u64, width: u64) -> Result<u64, Exc> {
        let p = self.check_data(addr, width, false)?;
        let le = self.st.memory.read_le(addr, width);
        let v = if self.big_endian(p) { le.swap_bytes() >> (64 - 8 * width) } else { le };
        self.entry.mem = Some(MemAccess { addr, width: width as u8, data: v, write: false });
        Ok(v)
    }

    fn store(&mut self, addr: u64, width: u64, v: u64) -> Result<(), Exc> {
        let p = self.check_data(addr, width, true)?;
        let v = if width == 8 { v } else { v & ((1u64 << (8 * width)) - 1) };
        let bytes = if self.big_endian(p) { v.swap_bytes() >> (64 - 8 * width) } else { v };
        self.st.memory.write_le(addr, width, bytes);
        self.entry.mem = Some(MemAccess { addr, width: width as u8, data: v, write: true });
        Ok(())
    }

    fn jump(&mut self, target: u64, kind: JumpKind) -> Result<Flow, Exc> {
        let mis = target % 4 != 0;
        self.obs.cond(Cond::JumpMisaligned, mis);
        if mis {
            return Err(exc(cause::INST_MISALIGNED, target));
        }
        self.st.pc = target;
        Ok(Flow::Jump { target, kind })
    }

    fn next(&mut self) -> Result<Flow, Exc> {
        self.st.pc = self.st.pc.wrapping_add(4);
        Ok(Flow::Next)
    }

    fn execute(&mut self, d: &Decoded, word: u32) -> Result<Flow, Exc> {
        let p = self.st.privilege;
        let pc = self.st.pc;
        let illegal = || exc(cause::ILLEGAL, word as u64);
        self.obs.line(LineSite::Exec(d.mnemonic, p));
        let (a, b, imm) = (self.x(d.rs1), self.x(d.rs2), d.imm as u64);
        let sh = |v: u64| (v & 63) as u32;
        let shw = |v: u64| (v & 31) as u32;
        let w = |v: u64| v as i32 as i64 as u64;
        match d.mnemonic {
            Lui => self.alu_rd(d.rd, ((d.imm << 12) as i32) as i64 as u64),
            Auipc => self.alu_rd(d.rd, pc.wrapping_add(((d.imm << 12) as i32) as i64 as u64)),
            Jal => {
                let target = pc.wrapping_add(imm);
                let flow = self.jump(target, JumpKind::Jal)?;
                self.write_rd(d.rd, pc.wrapping_add(4));
                return Ok(flow);
            }
            Jalr => {
                let target = a.wrapping_add(imm) & !1;
                let flow = self.jump(target, JumpKind::Jalr)?;
                self.write_rd(d.rd, pc.wrapping_add(4));
                return Ok(flow);
            }
            Beq | Bne | Blt | Bge | Bltu | Bgeu => {
                let taken = match d.mnemonic {
                    Beq => a == b,
                    Bne => a != b,
                    Blt => (a as i64) < (b as i64),
                    Bge => (a as i64) >= (b as i64),
                    Bltu => a < b,
                    _ => a >= b,
                };
                self.obs.cond(Cond::BranchTaken(d.mnemonic), taken);
                if taken {
                    return self.jump(pc.wrapping_add(imm), JumpKind::Branch);
                }
            }
            Lb | Lh | Lw | Ld | Lbu | Lhu | Lwu => {
                let width = match d.mnemonic {
                    Lb | Lbu => 1,
                    Lh | Lhu => 2,
                    Lw | Lwu => 4,
                    _ => 8,
                };
                let raw = self.load(a.wrapping_add(imm), width)?;
                let v = match d.mnemonic {
                    Lb => raw as i8 as i64 as u64,
                    Lh => raw as i16 as i64 as u64,
                    Lw => raw as i32 as i64 as u64,
                    _ => raw,
                };
                self.write_rd(d.rd, v);
            }
            Sb | Sh | Sw | Sd => {
                let width = match d.mnemonic {
                    Sb => 1,
                    Sh => 2,
                    Sw => 4,
                    _ => 8,
                };
                self.store(a.wrapping_add(imm), width, b)?;
            }
            Addi => self.alu_rd(d.rd, a.wrapping_add(imm)),
            Slti => self.alu_rd(d.rd, ((a as i64) < d.imm) as u64),
            Sltiu => self.alu_rd(d.rd, (a < imm) as u64),
            Xori => self.alu_rd(d.rd, a ^ imm),
            Ori => self.alu_rd(d.rd, a | imm),
            Andi => self.alu_rd(d.rd, a & imm),
            Slli => self.alu_rd(d.rd, a << sh(imm)),
            Srli => self.alu_rd(d.rd, a >> sh(imm)),
            Srai => self.alu_rd(d.rd, ((a as i64) >> sh(imm)) as u64),
            Add => self.alu_rd(d.rd, a.wrapping_add(b)),
            Sub => self.alu_rd(d.rd, a.wrapping_sub(b)),
            Sll => self.alu_rd(d.rd, a << sh(b)),
            Slt => self.alu_rd(d.rd, ((a as i64) < (b as i64)) as u64),
            Sltu => self.alu_rd(d.rd, (a < b) as u64),
            Xor => self.alu_rd(d.rd, a ^ b),
            Srl => self.alu_rd(d.rd, a >> sh(b)),
            Sra => self.alu_rd(d.rd, ((a as i64) >> sh(b)) as u64),
            Or => self.alu_rd(d.rd, a | b),
            And => self.alu_rd(d.rd, a & b),
            Addiw => self.alu_rd(d.rd, w(a.wrapping_add(imm))),
            Slliw => self.alu_rd(d.rd, w(((a as u32) << shw(imm)) as u64)),
            Srliw => self.alu_rd(d.rd, w(((a as u32) >> shw(imm)) as u64)),
            Sraiw => self.alu_rd(d.rd, ((a as i32) >> shw(imm)) as i64 as u64),
            Addw => self.alu_rd(d.rd, w(a.wrapping_add(b))),
            Subw => self.alu_rd(d.rd, w(a.wrapping_sub(b))),
            Sllw => self.alu_rd(d.rd, w(((a as u32) << shw(b)) as u64)),
            Srlw => self.alu_rd(d.rd, w(((a as u32) >> shw(b)) as u64)),
            Sraw => self.alu_rd(d.rd, ((a as i32) >> shw(b)) as i64 as u64),
            Fence => {}
            Ecall => {
                let c = match p {
                    Privilege::U => cause::ECALL_U,
                    Privilege::S => cause::ECALL_S,
                    Privilege::M => cause::ECALL_M,
                };
                return Err(exc(c, 0));
            }
            Ebreak => return Err(exc(cause::BREAKPOINT, pc)),
            Mret => {
                if p != Privilege::M {
                    return Err(illegal());
                }
                let to = self.st.mpp();
                self.obs.cond(Cond::XretLowers, to != Privilege::M);
                let mut s = self.st.mstatus();
                s = set_bit(s, mstatus::MIE, s & mstatus::MPIE != 0);
                s |= mstatus::MPIE;
                s &= !mstatus::MPP;
                if to != Privilege::M {
                    s &= !mstatus::MPRV;
                }
                self.st.set_raw(Csr::Mstatus, s);
                self.st.privilege = to;
                return self.jump(self.st.raw(Csr::Mepc), JumpKind::Mret);
            }
            Sret => {
                if p == Privilege::U {
                    return Err(illegal());
                }
                if p == Privilege::S {
                    let tsr = self.st.status_bit(mstatus::TSR);
                    self.obs.cond(Cond::TsrTrap, tsr);
                    if tsr {
                        return Err(illegal());
                    }
                }
                let mut s = self.st.mstatus();
                let to = if s & mstatus::SPP != 0 { Privilege::S } else { Privilege::U };
                self.obs.cond(Cond::XretLowers, to < p);
                s = set_bit(s, mstatus::SIE, s & mstatus::SPIE != 0);
                s |= mstatus::SPIE;
                s &= !mstatus::SPP;
                s &= !mstatus::MPRV;
                self.st.set_raw(Csr::Mstatus, s);
                self.st.privilege = to;
                return self.jump(self.st.raw(Csr::Sepc), JumpKind::Sret);
            }
            Wfi => {
                if p == Privilege::U {
                    return Err(illegal());
                }
                if p == Privilege::S {
                    let tw = self.st.status_bit(mstatus::TW);
                    self.obs.cond(Cond::TwTrap, tw);
                    if tw {
                        return Err(illegal());
                    }
                }
            }
            SfenceVma => {
                if p == Privilege::U {
                    return Err(illegal());
                }
                if p == Privilege::S {
                    let tvm = self.st.status_bit(mstatus::TVM);
                    self.obs.cond(Cond::TvmTrap, tvm);
                    if tvm {
                        return Err(illegal());
                    }
                }
            }
            Csrrw | Csrrs | Csrrc | Csrrwi | Csrrsi | Csrrci => {
                let csr = d.csr.expect("decoded CSR op carries a CSR");
                let (op, operand, writes) = match d.mnemonic {
                    Csrrw => (CsrOp::Write, a, true),
                    Csrrs => (CsrOp::Set, a, d.rs1 != 0),
                    Csrrc => (CsrOp::Clear, a, d.rs1 != 0),
                    Csrrwi => (CsrOp::Write, imm, true),
                    Csrrsi => (CsrOp::Set, imm, imm != 0),
                    _ => (CsrOp::Clear, imm, imm != 0),
                };
                let mut ok = p as u8 >= csr.min_privilege();
                if ok && csr == Csr::Satp && p == Privilege::S {
                    let tvm = self.st.status_bit(mstatus::TVM);
                    self.obs.cond(Cond::TvmTrap, tvm);
                    ok = !tvm;
                }
                self.obs.cond(Cond::CsrPrivilegeOk(csr), ok);
                if !ok {
                    return Err(illegal());
                }
                if writes {
                    let writable = !csr.is_read_only();
                    self.obs.cond(Cond::CsrWritable, writable);
                    if !writable {
                        return Err(illegal());
                    }
                }
                let reads = !matches!(d.mnemonic, Csrrw | Csrrwi) || d.rd != 0;
                let old = if reads {
                    self.obs.line(LineSite::CsrRead(csr));
                    self.csr_read(csr)
                } else {
                    0
                };
                if writes {
                    self.obs.line(LineSite::CsrWrite(csr));
                    self.csr_write(csr, op, operand);
                }
                self.write_rd(d.rd, old);
            }
            Li | Csrr | Csrw | Csrs | Csrc => unreachable!("decoder never yields pseudo-instructions"),
        }
        self.next()
    }

    fn sstatus_extra(&self) -> u64 {
        if self.q.endian_bits_in_sstatus {
            mstatus::SBE | mstatus::MBE
        } else {
            0
        }
    }

    fn csr_read(&mut self, csr: Csr) -> u64 {
        let st = &*self.st;
        let mideleg = st.raw(Csr::Mideleg);
        match csr {
            Csr::Sstatus => st.mstatus() & (mstatus::SSTATUS_READ | self.sstatus_extra()),
            Csr::Sie => st.raw(Csr::Mie) & mideleg,
            Csr::Sip => st.raw(Csr::Mip) & mideleg,
            Csr::Mip => {
                let mip = st.raw(Csr::Mip);
                self.obs.cond(Cond::MipMasked, mip & mideleg != 0);
                let mut hidden = mideleg;
                if self.q.delegated_sti_visible {
                    hidden &= !irq::STIP;
                }
                mip & !hidden
            }
            _ => st.raw(csr),
        }
    }

    fn csr_write(&mut self, csr: Csr, op: CsrOp, v: u64) {
        let mideleg = self.st.raw(Csr::Mideleg);
        let (backing, mask) = match csr {
            Csr::Sstatus => (Csr::Mstatus, mstatus::SSTATUS_WRITABLE | self.sstatus_extra()),
            Csr::Sie => (Csr::Mie, mideleg & irq::S_BITS),
            Csr::Sip => (Csr::Mip, mideleg & irq::SSIP),
            Csr::Mip => (Csr::Mip, irq::S_BITS),
            Csr::Mstatus => (Csr::Mstatus, mstatus::WRITABLE),
            Csr::Misa | Csr::Mhartid => (csr, 0),
            Csr::Medeleg => (csr, MEDELEG_WRITABLE),
            Csr::Mideleg => (csr, irq::S_BITS),
            Csr::Mie => (csr, irq::MIE_WRITABLE),
            Csr::Mtvec | Csr::Stvec => (csr, !2),
            Csr::Mepc | Csr::Sepc => (csr, !3),
            Csr::Pmpcfg0 => (csr, 0x9f),
            Csr::Pmpaddr0 => (csr, pmp::ADDR_MASK),
            _ => (csr, u64::MAX),
        };
        let raw = self.st.raw(backing);
        let mut new = match op {
            CsrOp::Write => (raw & !mask) | (v & mask),
            CsrOp::Set => raw | (v & mask),
            CsrOp::Clear => raw & !(v & mask),
        };
        match backing {
            Csr::Mstatus => {
                let legal = (new >> mstatus::MPP_SHIFT) & 3 != 2;
                self.obs.cond(Cond::MppLegal, legal);
                if !legal {
                    new = (new & !mstatus::MPP) | (raw & mstatus::MPP);
                }
            }
            Csr::Satp => {
                let ignored = new >> 60 != 0;
                self.obs.cond(Cond::SatpWriteIgnored, ignored);
                if ignored {
                    new = raw;
                }
            }
            Csr::Pmpcfg0 | Csr::Pmpaddr0 => {
                let locked = self.st.raw(Csr::Pmpcfg0) as u8 & pmp::L != 0;
                self.obs.cond(Cond::PmpLocked, locked);
                if locked {
                    new = raw;
                } else if backing == Csr::Pmpcfg0 && new & 3 == pmp::W as u64 {
                    new &= !(pmp::W as u64);
                }
            }
            _ => {}
        }
        self.st.set_raw(backing, new);
    }

    fn trap(&mut self, e: Exc, mnemonic: Option<Mnemonic>) {
        let from = self.st.privilege;
        let deleg = from != Privilege::M && (self.st.raw(Csr::Medeleg) >> e.cause) & 1 == 1;
        self.obs.cond(Cond::Delegated(e.cause), deleg);
        let pc = self.st.pc;
        let mut s = self.st.mstatus();
        let (to, tval) = if deleg {
            let tval =
                if self.q.stval_one && e.cause == cause::ILLEGAL && mnemonic == Some(SfenceVma) { 1 } else { e.tval };
            self.st.set_raw(Csr::Sepc, pc);
            self.st.set_raw(Csr::Scause, e.cause as u64);
            self.st.set_raw(Csr::Stval, tval);
            s = set_bit(s, mstatus::SPP, from == Privilege::S);
            s = set_bit(s, mstatus::SPIE, s & mstatus::SIE != 0);
            s &= !mstatus::SIE;
            let tvec = self.st.raw(Csr::Stvec);
            self.obs.cond(Cond::Vectored(Privilege::S), tvec & 1 == 1);
            self.st.pc = tvec & !3;
            (Privilege::S, tval)
        } else {
            self.st.set_raw(Csr::Mepc, pc);
            self.st.set_raw(Csr::Mcause, e.cause as u64);
            self.st.set_raw(Csr::Mtval, e.tval);
            s = (s & !mstatus::MPP) | (from.bits() << mstatus::MPP_SHIFT);
            s = set_bit(s, mstatus::MPIE, s & mstatus::MIE != 0);
            s &= !mstatus::MIE;
            let tvec = self.st.raw(Csr::Mtvec);
            self.obs.cond(Cond::Vectored(Privilege::M), tvec & 1 == 1);
            self.st.pc = tvec & !3;
            (Privilege::M, e.tval)
        };
        self.st.set_raw(Csr::Mstatus, s);
        self.st.privilege = to;
        self.obs.line(LineSite::Trap { cause: e.cause, to });
        self.entry.exception = Some(TrapInfo { cause: e.cause, tval });
    }
}

fn set_bit(v: u64, bit: u64, on: bool) -> u64 {
    if on {
        v | bit
    } else {
        v & !bit
    }
}
