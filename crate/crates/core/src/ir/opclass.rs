use std::fmt;
use std::str::FromStr;

/// Instruction class used for latency/energy lookup and functional-unit accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpClass {
    IAdd,
    IMul,
    IDiv,
    FAdd,
    FMul,
    FDiv,
    Cmp,
    Cast,
    Load,
    Store,
    Branch,
    CondBranch,
    Return,
    Send,
    Recv,
    AccelInvoke,
    TileId,
    NumTiles,
    Const,
    Move,
}

impl OpClass {
    pub const COUNT: usize = 20;

    pub const ALL: [OpClass; OpClass::COUNT] = [
        OpClass::IAdd,
        OpClass::IMul,
        OpClass::IDiv,
        OpClass::FAdd,
        OpClass::FMul,
        OpClass::FDiv,
        OpClass::Cmp,
        OpClass::Cast,
        OpClass::Load,
        OpClass::Store,
        OpClass::Branch,
        OpClass::CondBranch,
        OpClass::Return,
        OpClass::Send,
        OpClass::Recv,
        OpClass::AccelInvoke,
        OpClass::TileId,
        OpClass::NumTiles,
        OpClass::Const,
        OpClass::Move,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            OpClass::IAdd => "IADD",
            OpClass::IMul => "IMUL",
            OpClass::IDiv => "IDIV",
            OpClass::FAdd => "FADD",
            OpClass::FMul => "FMUL",
            OpClass::FDiv => "FDIV",
            OpClass::Cmp => "CMP",
            OpClass::Cast => "CAST",
            OpClass::Load => "LOAD",
            OpClass::Store => "STORE",
            OpClass::Branch => "BRANCH",
            OpClass::CondBranch => "COND_BRANCH",
            OpClass::Return => "RETURN",
            OpClass::Send => "SEND",
            OpClass::Recv => "RECV",
            OpClass::AccelInvoke => "ACCEL_INVOKE",
            OpClass::TileId => "TILE_ID",
            OpClass::NumTiles => "NUM_TILES",
            OpClass::Const => "CONST",
            OpClass::Move => "MOVE",
        }
    }

    pub fn is_memory(self) -> bool {
        matches!(self, OpClass::Load | OpClass::Store)
    }

    pub fn is_terminator(self) -> bool {
        matches!(
            self,
            OpClass::Branch | OpClass::CondBranch | OpClass::Return
        )
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownOpClass(pub String);

impl fmt::Display for UnknownOpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown opclass `{}`", self.0)
    }
}

impl std::error::Error for UnknownOpClass {}

impl FromStr for OpClass {
    type Err = UnknownOpClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.to_ascii_uppercase();
        OpClass::ALL
            .iter()
            .copied()
            .find(|c| c.name() == upper)
            .ok_or_else(|| UnknownOpClass(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for c in OpClass::ALL {
            assert_eq!(c.name().parse::<OpClass>().unwrap(), c);
            assert_eq!(OpClass::ALL[c.index()], c);
        }
        assert!("FOO".parse::<OpClass>().is_err());
    }
}
