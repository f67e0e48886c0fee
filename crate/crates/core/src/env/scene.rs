use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RoomType {
    Kitchen,
    LivingRoom,
    Bedroom,
    Bathroom,
}

impl RoomType {
    pub const ALL: [RoomType; 4] = [
        RoomType::Kitchen,
        RoomType::LivingRoom,
        RoomType::Bedroom,
        RoomType::Bathroom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoomType::Kitchen => "kitchen",
            RoomType::LivingRoom => "living_room",
            RoomType::Bedroom => "bedroom",
            RoomType::Bathroom => "bathroom",
        }
    }

    /// Episode step budget: 200 for living rooms, 100 otherwise.
    pub fn step_budget(self) -> usize {
        match self {
            RoomType::LivingRoom => 200,
            _ => 100,
        }
    }
}

impl std::fmt::Display for RoomType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RoomType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RoomType::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Value(format!("unknown room type '{s}'")))
    }
}

const NEIGHBOURS: [(i32, i32); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn distance(self, other: Cell) -> f64 {
        let (dx, dy) = ((self.x - other.x) as f64, (self.y - other.y) as f64);
        (dx * dx + dy * dy).sqrt()
    }
}

/// Facing direction. `y` grows southwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 4]
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }

    pub fn rotate_right(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn rotate_left(self) -> Self {
        Self::from_index(self.index() + 3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Pose {
    pub cell: Cell,
    pub heading: Heading,
}

impl Pose {
    pub fn new(x: i32, y: i32, heading: Heading) -> Self {
        Self {
            cell: Cell::new(x, y),
            heading,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ObjectInstance {
    pub category: usize,
    pub cell: Cell,
}

/// Immutable grid layout with placed objects.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    id: String,
    room_type: RoomType,
    width: usize,
    height: usize,
    walls: Vec<bool>,
    objects: Vec<ObjectInstance>,
    occupied: Vec<bool>,
    spawn_cells: Vec<Cell>,
}

impl Scene {
    /// Validates that objects sit on free cells, that the walkable region
    /// (free cells without objects) is connected, and that every object has
    /// a walkable neighbour. Spawn cells are the walkable cells.
    pub fn new(
        id: impl Into<String>,
        room_type: RoomType,
        width: usize,
        height: usize,
        walls: Vec<bool>,
        objects: Vec<ObjectInstance>,
    ) -> Result<Self> {
        if walls.len() != width * height || width == 0 || height == 0 {
            return Err(Error::Contract(format!(
                "wall mask of {} cells for {width}x{height} grid",
                walls.len()
            )));
        }
        let mut scene = Self {
            id: id.into(),
            room_type,
            width,
            height,
            walls,
            occupied: vec![false; width * height],
            objects,
            spawn_cells: Vec::new(),
        };
        for o in &scene.objects {
            if !scene.is_free(o.cell) {
                return Err(Error::Contract(format!(
                    "object {} at ({},{}) is not on a free cell",
                    o.category, o.cell.x, o.cell.y
                )));
            }
        }
        for o in &scene.objects {
            scene.occupied[o.cell.y as usize * width + o.cell.x as usize] = true;
        }
        scene.spawn_cells = scene
            .free_cells()
            .into_iter()
            .filter(|&c| scene.is_walkable(c))
            .collect();
        if scene.spawn_cells.is_empty() {
            return Err(Error::Contract("scene has no spawn cell".into()));
        }
        if !scene.walkable_region_connected() {
            return Err(Error::Contract("walkable region is not connected".into()));
        }
        for o in &scene.objects {
            let reachable = NEIGHBOURS
                .iter()
                .any(|&(dx, dy)| scene.is_walkable(o.cell.offset(dx, dy)));
            if !reachable {
                return Err(Error::Contract(format!(
                    "object at ({},{}) has no walkable neighbour",
                    o.cell.x, o.cell.y
                )));
            }
        }
        Ok(scene)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn room_type(&self) -> RoomType {
        self.room_type
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn objects(&self) -> &[ObjectInstance] {
        &self.objects
    }

    pub fn spawn_cells(&self) -> &[Cell] {
        &self.spawn_cells
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.walls[c.y as usize * self.width + c.x as usize]
    }

    /// In bounds and not a wall.
    pub fn is_free(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.is_wall(c)
    }

    /// Free and not occupied by an object; the agent can stand here.
    pub fn is_walkable(&self, c: Cell) -> bool {
        self.is_free(c) && !self.occupied[c.y as usize * self.width + c.x as usize]
    }

    pub fn free_cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for y in 0..self.height as i32 {
            for x in 0..self.width as i32 {
                let c = Cell::new(x, y);
                if !self.is_wall(c) {
                    out.push(c);
                }
            }
        }
        out
    }

    pub fn has_category(&self, category: usize) -> bool {
        self.objects.iter().any(|o| o.category == category)
    }

    pub fn instances(&self, category: usize) -> impl Iterator<Item = Cell> + '_ {
        self.objects
            .iter()
            .filter(move |o| o.category == category)
            .map(|o| o.cell)
    }

    /// Distinct categories present, ascending.
    pub fn categories(&self) -> Vec<usize> {
        let mut cats: Vec<usize> = self.objects.iter().map(|o| o.category).collect();
        cats.sort_unstable();
        cats.dedup();
        cats
    }

    fn walkable_region_connected(&self) -> bool {
        let start = self.spawn_cells[0];
        let mut seen = vec![false; self.walls.len()];
        let idx = |c: Cell| c.y as usize * self.width + c.x as usize;
        let mut queue = VecDeque::from([start]);
        seen[idx(start)] = true;
        let mut reached = 1;
        while let Some(c) = queue.pop_front() {
            for (dx, dy) in NEIGHBOURS {
                let n = c.offset(dx, dy);
                if self.is_walkable(n) && !seen[idx(n)] {
                    seen[idx(n)] = true;
                    reached += 1;
                    queue.push_back(n);
                }
            }
        }
        reached == self.spawn_cells.len()
    }

    /// Scene file: one grid row per line (`.` free, `#` wall), then one
    /// `category x y` line per object, then `@key value` metadata lines.
    pub fn to_text(&self, vocab: &Vocabulary) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            let row: String = (0..self.width)
                .map(|x| if self.walls[y * self.width + x] { '#' } else { '.' })
                .collect();
            out.push_str(&row);
            out.push('\n');
        }
        for o in &self.objects {
            writeln!(out, "{} {} {}", vocab.name(o.category), o.cell.x, o.cell.y).unwrap();
        }
        writeln!(out, "@id {}", self.id).unwrap();
        writeln!(out, "@room_type {}", self.room_type).unwrap();
        out
    }

    pub fn parse(text: &str, vocab: &Vocabulary, source_name: &str) -> Result<Self> {
        let mut grid: Vec<&str> = Vec::new();
        let mut objects = Vec::new();
        let mut id = None;
        let mut room = None;
        for (idx, line) in text.lines().enumerate() {
            let err = |m: String| Error::parse(source_name, idx + 1, m);
            if let Some(meta) = line.strip_prefix('@') {
                let (key, value) = meta
                    .split_once(' ')
                    .ok_or_else(|| err("metadata needs '@key value'".into()))?;
                match key {
                    "id" => id = Some(value.to_string()),
                    "room_type" => room = Some(value.parse::<RoomType>().map_err(|e| err(e.to_string()))?),
                    _ => return Err(err(format!("unknown metadata key '{key}'"))),
                }
            } else if !line.is_empty() && line.bytes().all(|b| b == b'.' || b == b'#') {
                if !objects.is_empty() || id.is_some() {
                    return Err(err("grid row after object lines".into()));
                }
                if grid.first().is_some_and(|r| r.len() != line.len()) {
                    return Err(err("grid rows differ in width".into()));
                }
                grid.push(line);
            } else {
                let fields: Vec<&str> = line.split(' ').collect();
                let [name, x, y] = fields[..] else {
                    return Err(err(format!("expected 'category x y', got '{line}'")));
                };
                let category = vocab
                    .index_of(name)
                    .ok_or_else(|| err(format!("unknown category '{name}'")))?;
                let coord = |s: &str| s.parse::<i32>().map_err(|_| err(format!("bad coordinate '{s}'")));
                objects.push(ObjectInstance {
                    category,
                    cell: Cell::new(coord(x)?, coord(y)?),
                });
            }
        }
        let (Some(id), Some(room)) = (id, room) else {
            return Err(Error::parse(source_name, text.lines().count(), "missing @id or @room_type"));
        };
        let height = grid.len();
        let width = grid.first().map_or(0, |r| r.len());
        let walls = grid.iter().flat_map(|r| r.bytes().map(|b| b == b'#')).collect();
        Scene::new(id, room, width, height, walls, objects)
    }

    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, vocab, &path.display().to_string())
    }

    pub fn save(&self, path: &Path, vocab: &Vocabulary) -> Result<()> {
        std::fs::write(path, self.to_text(vocab)).map_err(|e| Error::io(path, e))
    }
}

/// Parses an ASCII layout where `#` is a wall, `.` is free and any other
/// character is an object of the category mapped by `legend`. Used to
/// hand-build small scenes.
pub fn scene_from_ascii(
    id: &str,
    room: RoomType,
    rows: &[&str],
    legend: &[(char, usize)],
) -> Result<Scene> {
    let height = rows.len();
    let width = rows.first().map_or(0, |r| r.chars().count());
    let mut walls = Vec::with_capacity(width * height);
    let mut objects = Vec::new();
    for (y, row) in rows.iter().enumerate() {
        for (x, ch) in row.chars().enumerate() {
            walls.push(ch == '#');
            if let Some(&(_, cat)) = legend.iter().find(|(c, _)| *c == ch) {
                objects.push(ObjectInstance {
                    category: cat,
                    cell: Cell::new(x as i32, y as i32),
                });
            }
        }
    }
    Scene::new(id, room, width, height, walls, objects)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headings_rotate() {
        assert_eq!(Heading::North.rotate_right(), Heading::East);
        assert_eq!(Heading::North.rotate_left(), Heading::West);
        for h in Heading::ALL {
            assert_eq!(h.rotate_left().rotate_right(), h);
        }
    }

    #[test]
    fn file_round_trip_is_byte_exact() {
        let v = Vocabulary::desk();
        let s = scene_from_ascii(
            "k-1",
            RoomType::Kitchen,
            &["..#..", ".a#..", "....b", "....."],
            &[('a', 4), ('b', 0)],
        )
        .unwrap();
        let text = s.to_text(&v);
        let back = Scene::parse(&text, &v, "mem").unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_text(&v), text);
        assert_eq!(s.spawn_cells().len(), 20 - 2 - 2);
    }

    #[test]
    fn rejects_disconnected_and_walled_objects() {
        assert!(scene_from_ascii("x", RoomType::Kitchen, &["..#..", "..#.."], &[]).is_err());
        let walls = vec![false, true, false, false];
        let objs = vec![ObjectInstance {
            category: 0,
            cell: Cell::new(1, 0),
        }];
        assert!(Scene::new("x", RoomType::Kitchen, 2, 2, walls, objs).is_err());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let v = Vocabulary::desk();
        let err = Scene::parse("...\n...\nxyzzy 1 1\n@id a\n@room_type kitchen\n", &v, "s").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }
}
