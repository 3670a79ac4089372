use std::path::Path;

fn exported_functions(src: &str) -> Vec<String> {
    src.lines()
        .filter_map(|l| {
            let l = l.trim();
            let rest = l
                .strip_prefix("pub unsafe extern \"C\" fn ")
                .or_else(|| l.strip_prefix("pub extern \"C\" fn "))?;
            Some(rest.split('(').next()?.to_string())
        })
        .collect()
}

#[test]
fn header_declares_every_exported_function() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = std::fs::read_to_string(root.join("include/arz_etc.h")).unwrap();
    let src = std::fs::read_to_string(root.join("src/lib.rs")).unwrap();
    let names = exported_functions(&src);
    assert!(names.len() >= 14, "found {names:?}");
    for name in names {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
    for ty in [
        "typedef struct ArzConfig ArzConfig;",
        "typedef struct ArzSetup ArzSetup;",
        "typedef struct ArzResult ArzResult;",
    ] {
        assert!(header.contains(ty), "{ty} missing");
    }
    assert!(header.contains("ARZ_STATUS_OK = 0"));
}
