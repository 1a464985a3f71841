#![no_main]

use ddsolve::Mesh;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(mesh) = Mesh::parse_dump(text) {
            let mut out = Vec::new();
            mesh.write_dump(&mut out).unwrap();
            let again = Mesh::parse_dump(std::str::from_utf8(&out).unwrap()).unwrap();
            assert_eq!(again.triangles, mesh.triangles);
        }
    }
});
