use proptest::prelude::*;
use segconf::volume::{read_confidence, read_label};
use segconf::{write_volume, ConfidenceVolume, GridDims, LabelVolume};

fn dims() -> impl Strategy<Value = GridDims> {
    (1usize..6, 1usize..6, 1usize..6).prop_map(|(d, h, w)| GridDims::new(d, h, w).unwrap())
}

fn confidence() -> impl Strategy<Value = ConfidenceVolume> {
    dims().prop_flat_map(|g| {
        prop::collection::vec(0.0f32..=1.0, g.len())
            .prop_map(move |v| ConfidenceVolume::new(g, v).unwrap())
    })
}

fn label() -> impl Strategy<Value = LabelVolume> {
    dims().prop_flat_map(|g| {
        prop::collection::vec(0u8..=1, g.len()).prop_map(move |v| LabelVolume::new(g, v).unwrap())
    })
}

proptest! {
    #[test]
    fn confidence_roundtrip_is_bit_exact(vol in confidence()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        write_volume(&vol.clone().into(), &path).unwrap();
        let back = read_confidence(&path).unwrap();
        prop_assert_eq!(back.dims(), vol.dims());
        let bits = |v: &ConfidenceVolume| v.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&vol));
    }

    #[test]
    fn label_roundtrip(vol in label()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_volume(&vol.clone().into(), &path).unwrap();
        prop_assert_eq!(read_label(&path).unwrap(), vol);
    }

    /// A volume whose values encode their own flat index, probed at random
    /// coordinates after a disk round trip.
    #[test]
    fn row_major_dhw_ordering(g in dims(), probes in prop::collection::vec((0usize..6, 0usize..6, 0usize..6), 1..10)) {
        let n = g.len();
        let values: Vec<f32> = (0..n).map(|i| i as f32 / n as f32).collect();
        let vol = ConfidenceVolume::new(g, values).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.bin");
        write_volume(&vol.into(), &path).unwrap();
        let back = read_confidence(&path).unwrap();
        let raw = std::fs::read(&path).unwrap();
        for (d, h, w) in probes {
            let (d, h, w) = (d % g.d, h % g.h, w % g.w);
            let flat = d * g.h * g.w + h * g.w + w;
            prop_assert_eq!(back.at(d, h, w), f64::from(flat as f32 / n as f32));
            let stored = f32::from_le_bytes(raw[flat * 4..flat * 4 + 4].try_into().unwrap());
            prop_assert_eq!(stored, flat as f32 / n as f32);
        }
    }
}

#[test]
fn header_is_the_documented_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.bin");
    let vol = LabelVolume::new(GridDims::new(2, 3, 4).unwrap(), vec![0; 24]).unwrap();
    write_volume(&vol.into(), &path).unwrap();
    let header = std::fs::read_to_string(dir.path().join("v.meta.json")).unwrap();
    assert_eq!(
        header,
        r#"{"dims":[2,3,4],"dtype":"u8","order":"dhw-row-major","endianness":"little"}"#
    );
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 24);
}
