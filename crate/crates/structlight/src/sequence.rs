//! Time-overlapping projection scheduling.
//!
//! Instead of projecting all four Gray-coded patterns after every sinusoid
//! triple (7 patterns per reconstruction), one Gray pattern follows each
//! triple and each Gray frame is reused by four consecutive groups. A group
//! is then 4 frames (3 + 1), and every reconstruction assembles the group's
//! sinusoids with the four most recent distinct Gray frames.

use crate::error::Error;
use crate::Result;

/// Role of one projected/captured frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    S1,
    S2,
    S3,
    /// Gray bit pattern, 1-based bit index in [1, 4].
    Gray(u8),
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Role::S1 => write!(f, "S1"),
            Role::S2 => write!(f, "S2"),
            Role::S3 => write!(f, "S3"),
            Role::Gray(c) => write!(f, "G{c}"),
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S1" => Ok(Role::S1),
            "S2" => Ok(Role::S2),
            "S3" => Ok(Role::S3),
            _ => {
                if let Some(rest) = s.strip_prefix('G') {
                    let c: u8 = rest
                        .parse()
                        .map_err(|_| Error::Config(format!("bad role '{s}'")))?;
                    if (1..=GRAY_BITS as u8).contains(&c) {
                        return Ok(Role::Gray(c));
                    }
                }
                Err(Error::Config(format!("bad role '{s}'")))
            }
        }
    }
}

/// Number of Gray bit patterns cycled through the schedule.
pub const GRAY_BITS: usize = 4;

/// Frames per projecting group (3 sinusoids + 1 Gray).
pub const GROUP_SIZE: usize = 4;

/// How the assembler picks Gray frames for a group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssemblyPolicy {
    /// Latest frame at or before the group; streaming-safe with zero
    /// lookahead (default).
    Causal,
    /// Nearest frame in either direction; for offline runs.
    Centered,
}

/// The projection schedule: S1 S2 S3 G_c with c cycling 1..=4.
#[derive(Debug, Clone)]
pub struct Schedule {
    entries: Vec<Role>,
}

impl Schedule {
    pub fn new(n_groups: usize) -> Result<Self> {
        if n_groups == 0 {
            return Err(Error::Config("schedule needs at least one group".into()));
        }
        let mut entries = Vec::with_capacity(n_groups * GROUP_SIZE);
        for g in 1..=n_groups {
            entries.push(Role::S1);
            entries.push(Role::S2);
            entries.push(Role::S3);
            entries.push(Role::Gray(gray_bit_of_group(g)));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Role] {
        &self.entries
    }

    pub fn n_groups(&self) -> usize {
        self.entries.len() / GROUP_SIZE
    }
}

/// Which Gray bit the schedule projects in 1-based group `g`.
pub fn gray_bit_of_group(g: usize) -> u8 {
    ((g - 1) % GRAY_BITS) as u8 + 1
}

/// Frame indices feeding one reconstruction.
#[derive(Debug, Clone)]
pub struct GroupAssembly {
    /// 1-based group index.
    pub group: usize,
    /// Frame indices of (S1, S2, S3) of this group.
    pub sinusoids: [usize; 3],
    /// Frame index per Gray bit (index 0 holds bit 1).
    pub gray: [usize; GRAY_BITS],
    /// Group distance |group - source group| per bit.
    pub staleness: [usize; GRAY_BITS],
}

/// Assemble the reconstruction input for 1-based group `j` from a stream of
/// `n_groups * 4` frames laid out by [`Schedule`].
///
/// Causal policy requires j >= 4 (the first three groups lack a complete
/// Gray set); earlier groups return a warm-up error.
pub fn assemble(n_groups: usize, j: usize, policy: AssemblyPolicy) -> Result<GroupAssembly> {
    if j == 0 || j > n_groups {
        return Err(Error::Config(format!(
            "group {j} outside stream of {n_groups} groups"
        )));
    }
    if j < GRAY_BITS {
        return Err(Error::WarmUp { group: j });
    }
    let base = (j - 1) * GROUP_SIZE;
    let sinusoids = [base, base + 1, base + 2];

    let mut gray = [0usize; GRAY_BITS];
    let mut staleness = [0usize; GRAY_BITS];
    for bit in 1..=GRAY_BITS {
        let source = match policy {
            AssemblyPolicy::Causal => latest_group_with_bit(j, bit),
            AssemblyPolicy::Centered => {
                let below = latest_group_with_bit(j, bit);
                let above = below + GRAY_BITS;
                if above <= n_groups && above.abs_diff(j) < j.abs_diff(below) {
                    above
                } else {
                    below
                }
            }
        };
        gray[bit - 1] = (source - 1) * GROUP_SIZE + 3;
        staleness[bit - 1] = source.abs_diff(j);
    }
    Ok(GroupAssembly {
        group: j,
        sinusoids,
        gray,
        staleness,
    })
}

/// Largest group index <= j whose schedule slot carries Gray bit `bit`.
fn latest_group_with_bit(j: usize, bit: usize) -> usize {
    j - ((j + GRAY_BITS - bit) % GRAY_BITS)
}

/// Number of reconstructions a stream of `n_frames` frames yields, and the
/// reconstruction rate at a given projector refresh rate.
pub fn throughput_report(n_frames: usize, rate_hz: f64) -> Result<(usize, f64)> {
    if rate_hz <= 0.0 {
        return Err(Error::Config("rate must be positive".into()));
    }
    let groups = n_frames / GROUP_SIZE;
    let frames_out = groups.saturating_sub(GRAY_BITS - 1);
    Ok((frames_out, rate_hz / GROUP_SIZE as f64))
}
