use std::fmt::Write;

use super::{ImageSpec, InterfaceDescriptor};

/// Human-readable summary of one image: its classes, proxies, pruned
/// members, entry points and the interface records it touches.
pub fn image_listing(image: &ImageSpec, interface: &InterfaceDescriptor) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "image: {}", image.side);

    let _ = writeln!(out, "classes:");
    if image.concrete.is_empty() {
        let _ = writeln!(out, "  (none)");
    }
    for c in &image.concrete {
        let _ = writeln!(out, "  {} [{}]", c.decl.name, c.decl.annotation);
        for r in &c.relays {
            let kinds: Vec<&str> = r.params.iter().map(|k| k.code()).collect();
            let ret = r.ret.map_or("unit", |k| k.code());
            let _ = writeln!(out, "    {}({}) -> {}", r.relay_name(), kinds.join(","), ret);
        }
    }

    let _ = writeln!(out, "proxies:");
    if image.proxies.is_empty() {
        let _ = writeln!(out, "  (none)");
    }
    for p in &image.proxies {
        let _ = writeln!(out, "  {} proxy ({}, field `{}`)", p.class, p.direction, p.hash_field);
        for s in &p.stubs {
            let _ = writeln!(out, "    {} -> {}", s.signature(), s.ret);
        }
    }

    let _ = writeln!(out, "pruned:");
    if image.pruned_proxies.is_empty() && image.pruned_methods.is_empty() {
        let _ = writeln!(out, "  (none)");
    }
    for p in &image.pruned_proxies {
        let _ = writeln!(out, "  {p} proxy: pruned (unreachable)");
    }
    for m in &image.pruned_methods {
        let _ = writeln!(out, "  {m}: pruned (unreachable)");
    }

    let _ = writeln!(out, "entry points:");
    for e in &image.entry_points {
        let _ = writeln!(out, "  {e}");
    }

    let _ = writeln!(out, "interface:");
    if interface.records.is_empty() {
        let _ = writeln!(out, "  (none)");
    }
    for r in &interface.records {
        let _ = writeln!(out, "  {r}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::partitioner::compute_images;

    #[test]
    fn listing1_trusted_listing() {
        let src = include_str!("../../tests/fixtures/listing1.ep");
        let plan = compute_images(&parse_program(src).unwrap()).unwrap();
        let text = image_listing(&plan.trusted, &plan.interface);
        assert!(text.starts_with("image: trusted\nclasses:\n  Account [trusted]\n"), "{text}");
        assert!(text.contains("  Person proxy: pruned (unreachable)\n"));
        assert!(text.contains("proxies:\n  (none)\n"));

        let text = image_listing(&plan.untrusted, &plan.interface);
        assert!(text.contains("  Account proxy (ecall, field `hash`)\n    Account(String,int) -> void\n"), "{text}");
        assert!(text.contains("    updateBalance(int) -> void\n"));
    }
}
