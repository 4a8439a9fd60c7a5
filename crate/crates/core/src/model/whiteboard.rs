use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AgentId, GossipToken};
use crate::topology::Port;

/// Whiteboard capacity class.
#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BoardClass {
    /// No whiteboard.
    NW,
    /// Control information only.
    CW,
    /// Control information plus gossip payloads.
    FW,
}

impl std::str::FromStr for BoardClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NW" => Ok(Self::NW),
            "CW" => Ok(Self::CW),
            "FW" => Ok(Self::FW),
            _ => Err(format!("unknown board class {s:?} (expected NW, CW or FW)")),
        }
    }
}

impl std::fmt::Display for BoardClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoardError {
    #[error("{class} whiteboard cannot hold {what}")]
    ClassViolation { class: BoardClass, what: &'static str },
}

/// Associative table with at most one entry per agent id, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdMap<V> {
    entries: Vec<(AgentId, V)>,
}

impl<V> Default for IdMap<V> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<V: Copy> IdMap<V> {
    pub fn get(&self, id: AgentId) -> Option<V> {
        self.entries
            .binary_search_by_key(&id, |e| e.0)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn insert(&mut self, id: AgentId, v: V) {
        match self.entries.binary_search_by_key(&id, |e| e.0) {
            Ok(i) => self.entries[i].1 = v,
            Err(i) => self.entries.insert(i, (id, v)),
        }
    }

    pub fn remove(&mut self, id: AgentId) {
        if let Ok(i) = self.entries.binary_search_by_key(&id, |e| e.0) {
            self.entries.remove(i);
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (AgentId, V)> + '_ {
        self.entries.iter().copied()
    }

    pub fn map_ids(&self, f: impl Fn(AgentId) -> AgentId) -> Self {
        let mut out = Self::default();
        for (id, v) in self.iter() {
            out.insert(f(id), v);
        }
        out
    }
}

/// Selector for the three associative control tables.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Table {
    TTable,
    InLink,
    OutLink,
}

/// A value stored in (or read from) a control table.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TableValue {
    Bit(bool),
    /// `None` is the bottom value.
    Link(Option<Port>),
}

/// Per-node storage. The control fields exist for CW and FW boards; the
/// gossip store only for FW. NW boards stay at their defaults forever.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Whiteboard {
    class: BoardClass,
    t_table: IdMap<bool>,
    in_link: IdMap<Port>,
    out_link: IdMap<Port>,
    min_id: AgentId,
    wait_t: u32,
    waiting: Vec<AgentId>,
    timer: u32,
    gossip_store: BTreeSet<GossipToken>,
}

impl Whiteboard {
    /// Clean board: empty tables, `MinID = max_id`, zero timers.
    pub fn new(class: BoardClass, max_id: AgentId) -> Self {
        Self {
            class,
            t_table: IdMap::default(),
            in_link: IdMap::default(),
            out_link: IdMap::default(),
            min_id: max_id,
            wait_t: 0,
            waiting: Vec::new(),
            timer: 0,
            gossip_store: BTreeSet::new(),
        }
    }

    pub fn class(&self) -> BoardClass {
        self.class
    }

    fn control(&self, what: &'static str) -> Result<(), BoardError> {
        match self.class {
            BoardClass::NW => Err(BoardError::ClassViolation {
                class: self.class,
                what,
            }),
            _ => Ok(()),
        }
    }

    /// Missing entries read as `true`.
    pub fn t_bit(&self, id: AgentId) -> bool {
        self.t_table.get(id).unwrap_or(true)
    }

    pub fn in_link(&self, id: AgentId) -> Option<Port> {
        self.in_link.get(id)
    }

    pub fn out_link(&self, id: AgentId) -> Option<Port> {
        self.out_link.get(id)
    }

    /// Storing the default (`true`) removes the entry.
    pub fn set_t_bit(&mut self, id: AgentId, bit: bool) -> Result<(), BoardError> {
        self.control("T_table entries")?;
        if bit {
            self.t_table.remove(id);
        } else {
            self.t_table.insert(id, bit);
        }
        Ok(())
    }

    /// Storing bottom removes the entry.
    pub fn set_in_link(&mut self, id: AgentId, port: Option<Port>) -> Result<(), BoardError> {
        self.control("InLink entries")?;
        match port {
            Some(p) => self.in_link.insert(id, p),
            None => self.in_link.remove(id),
        }
        Ok(())
    }

    pub fn set_out_link(&mut self, id: AgentId, port: Option<Port>) -> Result<(), BoardError> {
        self.control("OutLink entries")?;
        match port {
            Some(p) => self.out_link.insert(id, p),
            None => self.out_link.remove(id),
        }
        Ok(())
    }

    pub fn assoc_put(&mut self, table: Table, id: AgentId, value: TableValue) -> Result<(), BoardError> {
        match (table, value) {
            (Table::TTable, TableValue::Bit(b)) => self.set_t_bit(id, b),
            (Table::InLink, TableValue::Link(p)) => self.set_in_link(id, p),
            (Table::OutLink, TableValue::Link(p)) => self.set_out_link(id, p),
            (Table::TTable, _) => panic!("T_table stores bits"),
            (_, _) => panic!("link tables store ports"),
        }
    }

    pub fn assoc_get(&self, table: Table, id: AgentId) -> TableValue {
        match table {
            Table::TTable => TableValue::Bit(self.t_bit(id)),
            Table::InLink => TableValue::Link(self.in_link(id)),
            Table::OutLink => TableValue::Link(self.out_link(id)),
        }
    }

    pub fn t_table(&self) -> &IdMap<bool> {
        &self.t_table
    }

    pub fn in_links(&self) -> &IdMap<Port> {
        &self.in_link
    }

    pub fn out_links(&self) -> &IdMap<Port> {
        &self.out_link
    }

    pub fn min_id(&self) -> AgentId {
        self.min_id
    }

    pub fn set_min_id(&mut self, id: AgentId) -> Result<(), BoardError> {
        self.control("MinID")?;
        self.min_id = id;
        Ok(())
    }

    pub fn wait_t(&self) -> u32 {
        self.wait_t
    }

    pub fn set_wait_t(&mut self, w: u32) -> Result<(), BoardError> {
        self.control("WaitT")?;
        self.wait_t = w;
        Ok(())
    }

    pub fn timer(&self) -> u32 {
        self.timer
    }

    pub fn set_timer(&mut self, t: u32) -> Result<(), BoardError> {
        self.control("a timer")?;
        self.timer = t;
        Ok(())
    }

    pub fn reset_timer(&mut self) -> Result<(), BoardError> {
        self.set_timer(0)
    }

    /// One round passes. Saturates at `cap`; NW boards have no timer.
    pub fn tick(&mut self, cap: u32) {
        if self.class != BoardClass::NW && self.timer < cap {
            self.timer += 1;
        }
    }

    pub fn waiting(&self) -> &[AgentId] {
        &self.waiting
    }

    pub fn is_waiting(&self, id: AgentId) -> bool {
        self.waiting.binary_search(&id).is_ok()
    }

    pub fn add_waiting(&mut self, id: AgentId) -> Result<(), BoardError> {
        self.control("Waiting entries")?;
        if let Err(i) = self.waiting.binary_search(&id) {
            self.waiting.insert(i, id);
        }
        Ok(())
    }

    /// Removes and returns the smallest waiting id.
    pub fn pop_min_waiting(&mut self) -> Option<AgentId> {
        if self.waiting.is_empty() {
            None
        } else {
            Some(self.waiting.remove(0))
        }
    }

    pub fn gossip_store(&self) -> &BTreeSet<GossipToken> {
        &self.gossip_store
    }

    pub fn store_gossip(&mut self, tokens: impl IntoIterator<Item = GossipToken>) -> Result<(), BoardError> {
        if self.class != BoardClass::FW {
            return Err(BoardError::ClassViolation {
                class: self.class,
                what: "gossip information",
            });
        }
        self.gossip_store.extend(tokens);
        Ok(())
    }

    /// Replaces the gossip store wholesale.
    pub fn replace_gossip(&mut self, tokens: BTreeSet<GossipToken>) -> Result<(), BoardError> {
        self.gossip_store.clear();
        self.store_gossip(tokens)
    }

    /// Copy of this board with every stored agent id passed through `f`.
    pub fn map_ids(&self, f: impl Fn(AgentId) -> AgentId + Copy) -> Self {
        let mut waiting: Vec<AgentId> = self.waiting.iter().map(|&i| f(i)).collect();
        waiting.sort_unstable();
        waiting.dedup();
        Self {
            class: self.class,
            t_table: self.t_table.map_ids(f),
            in_link: self.in_link.map_ids(f),
            out_link: self.out_link.map_ids(f),
            min_id: f(self.min_id),
            wait_t: self.wait_t,
            waiting,
            timer: self.timer,
            gossip_store: self.gossip_store.clone(),
        }
    }

    /// True when nothing but the clean defaults is stored.
    pub fn is_blank(&self, max_id: AgentId) -> bool {
        *self == Self::new(self.class, max_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cw() -> Whiteboard {
        Whiteboard::new(BoardClass::CW, AgentId(1000))
    }

    #[test]
    fn put_twice_keeps_one_entry() {
        let mut b = cw();
        b.assoc_put(Table::TTable, AgentId(5), TableValue::Bit(false)).unwrap();
        b.assoc_put(Table::TTable, AgentId(5), TableValue::Bit(false)).unwrap();
        assert_eq!(b.t_table().len(), 1);
        assert_eq!(b.assoc_get(Table::TTable, AgentId(5)), TableValue::Bit(false));
    }

    #[test]
    fn storing_bottom_removes_entry() {
        let mut b = cw();
        b.set_in_link(AgentId(5), Some(1)).unwrap();
        b.assoc_put(Table::InLink, AgentId(5), TableValue::Link(None)).unwrap();
        assert!(b.in_links().is_empty());
        assert_eq!(b.in_link(AgentId(5)), None);
    }

    #[test]
    fn defaults() {
        let b = cw();
        assert_eq!(b.assoc_get(Table::TTable, AgentId(7)), TableValue::Bit(true));
        assert_eq!(b.assoc_get(Table::InLink, AgentId(7)), TableValue::Link(None));
        assert_eq!(b.assoc_get(Table::OutLink, AgentId(7)), TableValue::Link(None));
        let mut b = b;
        b.set_out_link(AgentId(7), Some(2)).unwrap();
        assert_eq!(b.out_link(AgentId(7)), Some(2));
    }

    #[test]
    fn class_rules() {
        let mut nw = Whiteboard::new(BoardClass::NW, AgentId(9));
        assert!(matches!(
            nw.set_t_bit(AgentId(1), false),
            Err(BoardError::ClassViolation { class: BoardClass::NW, .. })
        ));
        assert!(nw.add_waiting(AgentId(1)).is_err());
        assert!(nw.set_in_link(AgentId(1), Some(0)).is_err());
        nw.tick(10);
        assert!(nw.is_blank(AgentId(9)));

        let mut b = cw();
        let tok = GossipToken::genuine(0);
        assert!(b.store_gossip([tok.clone()]).is_err());
        let mut fw = Whiteboard::new(BoardClass::FW, AgentId(9));
        fw.store_gossip([tok.clone()]).unwrap();
        assert!(fw.gossip_store().contains(&tok));
    }

    #[test]
    fn timer_saturates() {
        let mut b = cw();
        for _ in 0..10 {
            b.tick(4);
        }
        assert_eq!(b.timer(), 4);
        b.reset_timer().unwrap();
        assert_eq!(b.timer(), 0);
    }

    #[test]
    fn waiting_is_a_sorted_set() {
        let mut b = cw();
        for id in [8, 3, 8, 5] {
            b.add_waiting(AgentId(id)).unwrap();
        }
        assert_eq!(b.waiting(), &[AgentId(3), AgentId(5), AgentId(8)]);
        assert_eq!(b.pop_min_waiting(), Some(AgentId(3)));
    }
}
