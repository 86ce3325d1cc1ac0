//! Minimal behavior-tree runtime: memory sequences, fallbacks and a switch
//! node whose branch is chosen when it starts. Leaves are opaque actions run
//! by a [`Blackboard`].

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Status {
    Idle,
    Running,
    Success,
    Failure,
}

impl Status {
    pub fn is_done(self) -> bool {
        matches!(self, Status::Success | Status::Failure)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorNodeState {
    pub node: String,
    pub status: Status,
}

pub trait Blackboard<A> {
    /// Runs one tick of `action`. `resumed` is true when the leaf returned
    /// `Running` on its previous tick.
    fn run(&mut self, action: &A, resumed: bool) -> Status;

    /// Picks the branch of switch node `name`, `None` to fail the switch.
    fn select(&mut self, name: &str) -> Option<usize>;
}

#[derive(Debug, Clone)]
pub enum Node<A> {
    Action {
        name: String,
        action: A,
        status: Status,
    },
    /// Resumes at its first child that has not yet succeeded.
    MemorySequence {
        name: String,
        children: Vec<Node<A>>,
        cursor: usize,
        status: Status,
    },
    /// Succeeds on the first child success, fails when all children fail.
    Fallback {
        name: String,
        children: Vec<Node<A>>,
        cursor: usize,
        status: Status,
    },
    Switch {
        name: String,
        branches: Vec<Node<A>>,
        active: Option<usize>,
        status: Status,
    },
}

impl<A> Node<A> {
    pub fn action(name: impl Into<String>, action: A) -> Self {
        Node::Action {
            name: name.into(),
            action,
            status: Status::Idle,
        }
    }

    pub fn sequence(name: impl Into<String>, children: Vec<Node<A>>) -> Self {
        Node::MemorySequence {
            name: name.into(),
            children,
            cursor: 0,
            status: Status::Idle,
        }
    }

    pub fn fallback(name: impl Into<String>, children: Vec<Node<A>>) -> Self {
        Node::Fallback {
            name: name.into(),
            children,
            cursor: 0,
            status: Status::Idle,
        }
    }

    pub fn switch(name: impl Into<String>, branches: Vec<Node<A>>) -> Self {
        Node::Switch {
            name: name.into(),
            branches,
            active: None,
            status: Status::Idle,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Node::Action { name, .. }
            | Node::MemorySequence { name, .. }
            | Node::Fallback { name, .. }
            | Node::Switch { name, .. } => name,
        }
    }

    pub fn status(&self) -> Status {
        match self {
            Node::Action { status, .. }
            | Node::MemorySequence { status, .. }
            | Node::Fallback { status, .. }
            | Node::Switch { status, .. } => *status,
        }
    }

    pub fn tick(&mut self, bb: &mut impl Blackboard<A>) -> Status {
        let result = match self {
            Node::Action { action, status, .. } => bb.run(action, *status == Status::Running),
            Node::MemorySequence {
                children, cursor, ..
            } => loop {
                let Some(child) = children.get_mut(*cursor) else {
                    break Status::Success;
                };
                match child.tick(bb) {
                    Status::Success => *cursor += 1,
                    other => break other,
                }
            },
            Node::Fallback {
                children, cursor, ..
            } => loop {
                let Some(child) = children.get_mut(*cursor) else {
                    break Status::Failure;
                };
                match child.tick(bb) {
                    Status::Failure => *cursor += 1,
                    other => break other,
                }
            },
            Node::Switch {
                name,
                branches,
                active,
                ..
            } => {
                let idx = match *active {
                    Some(i) => Some(i),
                    None => bb.select(name).filter(|&i| i < branches.len()),
                };
                match idx {
                    None => Status::Failure,
                    Some(i) => {
                        *active = Some(i);
                        branches[i].tick(bb)
                    }
                }
            }
        };
        self.set_status(result);
        if result.is_done() {
            self.rewind();
        }
        result
    }

    fn set_status(&mut self, s: Status) {
        match self {
            Node::Action { status, .. }
            | Node::MemorySequence { status, .. }
            | Node::Fallback { status, .. }
            | Node::Switch { status, .. } => *status = s,
        }
    }

    /// Resets children so the next tick starts over, keeping this node's status.
    fn rewind(&mut self) {
        match self {
            Node::Action { .. } => {}
            Node::MemorySequence {
                children, cursor, ..
            }
            | Node::Fallback {
                children, cursor, ..
            } => {
                *cursor = 0;
                children.iter_mut().for_each(Node::reset);
            }
            Node::Switch {
                branches, active, ..
            } => {
                *active = None;
                branches.iter_mut().for_each(Node::reset);
            }
        }
    }

    pub fn reset(&mut self) {
        self.rewind();
        self.set_status(Status::Idle);
    }

    /// Depth-first node states.
    pub fn states(&self) -> Vec<BehaviorNodeState> {
        let mut out = Vec::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut Vec<BehaviorNodeState>) {
        out.push(BehaviorNodeState {
            node: self.name().to_owned(),
            status: self.status(),
        });
        match self {
            Node::Action { .. } => {}
            Node::MemorySequence { children, .. } | Node::Fallback { children, .. } => {
                children.iter().for_each(|c| c.collect(out));
            }
            Node::Switch { branches, .. } => branches.iter().for_each(|c| c.collect(out)),
        }
    }

    /// Name of the deepest running leaf, if any.
    pub fn running_leaf(&self) -> Option<&str> {
        match self {
            Node::Action { name, status, .. } => {
                (*status == Status::Running).then_some(name.as_str())
            }
            Node::MemorySequence { children, .. } | Node::Fallback { children, .. } => {
                children.iter().find_map(Node::running_leaf)
            }
            Node::Switch { branches, .. } => branches.iter().find_map(Node::running_leaf),
        }
    }
}
