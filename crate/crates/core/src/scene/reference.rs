//! Ground-truth class tables of the two public benchmark scenes.
//!
//! These are metadata only; the scenes themselves are supplied locally as
//! HSC1 files converted from their original distribution.

/// Indian Pines (AVIRIS, 145 x 145), 16 classes.
pub const INDIAN_PINES_CLASSES: [(&str, usize); 16] = [
    ("Alfalfa", 46),
    ("Corn-notill", 1428),
    ("Corn-mintill", 830),
    ("Corn", 237),
    ("Grass-pasture", 483),
    ("Grass-trees", 730),
    ("Grass-pasture-mowed", 28),
    ("Hay-windrowed", 478),
    ("Oats", 20),
    ("Soybean-notill", 972),
    ("Soybean-mintill", 2455),
    ("Soybean-clean", 593),
    ("Wheat", 205),
    ("Woods", 1265),
    ("Buildings-Grass-Trees-Drives", 386),
    ("Stone-Steel-Towers", 93),
];

pub const INDIAN_PINES_SIZE: (usize, usize) = (145, 145);

/// Pavia University (ROSIS), 9 classes.
pub const PAVIA_UNIVERSITY_CLASSES: [(&str, usize); 9] = [
    ("Asphalt", 6631),
    ("Meadows", 18649),
    ("Gravel", 2099),
    ("Trees", 3064),
    ("Painted metal sheets", 1345),
    ("Bare Soil", 5029),
    ("Bitumen", 1330),
    ("Self-Blocking Bricks", 3682),
    ("Shadows", 947),
];

pub fn total(table: &[(&str, usize)]) -> usize {
    table.iter().map(|(_, n)| n).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_totals() {
        assert_eq!(total(&INDIAN_PINES_CLASSES), 10_249);
        assert_eq!(total(&PAVIA_UNIVERSITY_CLASSES), 42_776);
    }
}
