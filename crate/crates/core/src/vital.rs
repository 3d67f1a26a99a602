//! Vital rules: how `Fconf`, `Finte` and `Fleak` spread.
//!
//! Confidentiality spreads selectively: a written file inherits `Fconf` only
//! from a writer holding both `Fconf` and `Fleak`. Writes are never refused
//! here.

use crate::rule::Rule;
use crate::world::{EntityRef, Flag, FlagSet, FsNode, NodeId, ProcessId, World, WorldError};

/// Applied as `flags = (flags - cleared) | added`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VitalMutation {
    pub target: EntityRef,
    pub added: FlagSet,
    /// Non-empty only for `VR_file_proc` on exec.
    pub cleared: FlagSet,
    pub rule: Rule,
    pub cause: EntityRef,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WriteAction {
    Create,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConsumeAction {
    Execve,
    Read,
}

const DIR_INHERITED: FlagSet = FlagSet::CONF.union(FlagSet::INTE);
const FORK_INHERITED: FlagSet = FlagSet::CONF.union(FlagSet::LEAK);

fn regular_file(world: &World, node: NodeId) -> Result<&FsNode, WorldError> {
    let n = world.node(node).ok_or(WorldError::UnknownNode(node))?;
    if !n.is_file() {
        return Err(WorldError::NotAFile(n.path.clone()));
    }
    Ok(n)
}

/// A new node inherits `Fconf`/`Finte` from its directory at creation.
pub fn vr_dir_dir(
    world: &World,
    parent_dir: NodeId,
    new_node: NodeId,
) -> Result<Option<VitalMutation>, WorldError> {
    let parent = world
        .node(parent_dir)
        .ok_or(WorldError::UnknownNode(parent_dir))?;
    if !parent.is_dir() {
        return Err(WorldError::NotADirectory(parent.path.clone()));
    }
    world
        .node(new_node)
        .ok_or(WorldError::UnknownNode(new_node))?;
    let added = parent.flags & DIR_INHERITED;
    Ok((!added.is_empty()).then(|| VitalMutation {
        target: EntityRef::Node(new_node),
        added,
        cleared: FlagSet::empty(),
        rule: Rule::VrDirDir,
        cause: EntityRef::Node(parent_dir),
    }))
}

/// A child inherits `Fconf`/`Fleak` from its parent at creation.
pub fn vr_proc_proc(
    world: &World,
    parent: ProcessId,
    child: ProcessId,
) -> Result<Option<VitalMutation>, WorldError> {
    let p = world.process(parent).ok_or(WorldError::UnknownProcess(parent))?;
    world.process(child).ok_or(WorldError::UnknownProcess(child))?;
    let added = p.flags & FORK_INHERITED;
    Ok((!added.is_empty()).then(|| VitalMutation {
        target: EntityRef::Process(child),
        added,
        cleared: FlagSet::empty(),
        rule: Rule::VrProcProc,
        cause: EntityRef::Process(parent),
    }))
}

/// A file created or modified by a process holding both `Fconf` and `Fleak`
/// becomes confidential.
pub fn vr_proc_file(
    world: &World,
    pid: ProcessId,
    node: NodeId,
    _action: WriteAction,
) -> Result<Option<VitalMutation>, WorldError> {
    let proc = world.live_process(pid)?;
    regular_file(world, node)?;
    let spreads = proc.flags.has(Flag::Conf) && proc.flags.has(Flag::Leak);
    Ok(spreads.then(|| VitalMutation {
        target: EntityRef::Node(node),
        added: FlagSet::CONF,
        cleared: FlagSet::empty(),
        rule: Rule::VrProcFile,
        cause: EntityRef::Process(pid),
    }))
}

/// Exec clears `Fconf`/`Fleak` and inherits the file's `Fleak`; reading a
/// confidential file confers `Fconf`.
pub fn vr_file_proc(
    world: &World,
    pid: ProcessId,
    node: NodeId,
    action: ConsumeAction,
) -> Result<Option<VitalMutation>, WorldError> {
    world.live_process(pid)?;
    let file = regular_file(world, node)?;
    let mutation = |added, cleared| VitalMutation {
        target: EntityRef::Process(pid),
        added,
        cleared,
        rule: Rule::VrFileProc,
        cause: EntityRef::Node(node),
    };
    match action {
        ConsumeAction::Execve => {
            if !file.exec_bits {
                return Err(WorldError::NotExecutable(file.path.clone()));
            }
            Ok(Some(mutation(file.flags & FlagSet::LEAK, FORK_INHERITED)))
        }
        ConsumeAction::Read => Ok(file
            .flags
            .has(Flag::Conf)
            .then(|| mutation(FlagSet::CONF, FlagSet::empty()))),
    }
}
