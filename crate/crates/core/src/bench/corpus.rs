//! Random annotated programs for oracle checks.
//!
//! The generator only emits programs whose output cannot depend on placement:
//! neutral objects are immutable after construction, lists handed to another
//! object are only read, annotated classes reference each other as a DAG so
//! every call chain terminates, and no expression can divide by zero or read
//! a null reference.

use std::fmt::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dsl::{parse_program, Program};

struct Node {
    trusted: bool,
    children: Vec<usize>,
}

/// Source text of the program for `seed`.
pub fn corpus_source(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_nodes = rng.gen_range(2..=5);
    let nodes: Vec<Node> = (0..n_nodes)
        .map(|i| Node {
            trusted: rng.gen_bool(0.5),
            children: (i + 1..n_nodes).filter(|_| rng.gen_bool(0.4)).collect(),
        })
        .collect();

    let mut out = String::new();
    note_class(&mut out);
    for (i, node) in nodes.iter().enumerate() {
        node_class(&mut out, &mut rng, i, node);
    }
    main_class(&mut out, &mut rng, &nodes);
    out
}

pub fn corpus_program(seed: u64) -> Program {
    parse_program(&corpus_source(seed)).expect("corpus source parses")
}

/// `count` programs from consecutive seeds starting at `seed`.
pub fn generate_corpus(seed: u64, count: usize) -> Vec<(u64, Program)> {
    (seed..seed + count as u64).map(|s| (s, corpus_program(s))).collect()
}

fn note_class(out: &mut String) {
    out.push_str(
        "public class Note {
    private int a;
    private String s;

    public Note(int a, String s) {
        this.a = a;
        this.s = s;
    }

    public int getA() { return this.a; }

    public String getS() { return this.s; }

    public String show() { return this.s + \"#\" + this.a; }
}

",
    );
}

fn node_class(out: &mut String, rng: &mut ChaCha8Rng, i: usize, node: &Node) {
    let annotation = if node.trusted { "@Trusted" } else { "@Untrusted" };
    let _ = writeln!(out, "{annotation}\npublic class Node{i} {{");
    let _ = writeln!(out, "    private int acc;\n    private String tag;");
    let _ = writeln!(out, "    private List<Integer> hist = new List<Integer>();");
    for c in &node.children {
        let _ = writeln!(out, "    private Node{c} c{c};");
    }

    let _ = writeln!(out, "\n    public Node{i}(int seed, String tag) {{");
    let _ = writeln!(out, "        this.acc = seed % 1000;\n        this.tag = tag;");
    for c in &node.children {
        let k = rng.gen_range(1..50);
        let _ = writeln!(out, "        this.c{c} = new Node{c}(seed + {k}, tag + \"/{c}\");");
    }
    let _ = writeln!(out, "    }}\n");

    let m = rng.gen_range(2..9);
    let _ = writeln!(out, "    public int step(int x) {{");
    let _ = writeln!(out, "        this.acc = (this.acc * {m} + x) % 1000;");
    let _ = writeln!(out, "        this.hist.append(this.acc);");
    for c in &node.children {
        let d = rng.gen_range(0..10);
        let _ = writeln!(out, "        this.acc = (this.acc + this.c{c}.step(x + {d})) % 1000;");
    }
    let _ = writeln!(out, "        return this.acc;\n    }}\n");

    let _ = writeln!(out, "    public String label(Note n) {{");
    let _ = writeln!(out, "        return this.tag + \":\" + n.getS() + \"=\" + (n.getA() + this.acc);\n    }}\n");

    let _ = writeln!(out, "    public Note snapshot() {{\n        return new Note(this.acc, this.tag);\n    }}\n");

    let _ = writeln!(out, "    public int total(List<Integer> xs) {{");
    let _ = writeln!(out, "        int s = 0;\n        int i = 0;");
    let _ = writeln!(out, "        while (i < xs.len()) {{\n            s = s + xs.get(i);\n            i += 1;\n        }}");
    let _ = writeln!(out, "        return s + this.acc;\n    }}\n");

    let _ = writeln!(out, "    public void report() {{");
    let _ = writeln!(out, "        print(this.tag + \" acc=\" + this.acc + \" n=\" + this.hist.len());\n    }}\n");

    let _ = writeln!(out, "    public void save() {{");
    let _ = writeln!(out, "        file_write(this.tag + \".txt\", \"\" + this.acc);\n    }}\n");

    let _ = writeln!(out, "    public boolean big() {{\n        return this.acc > 500;\n    }}");

    for c in &node.children {
        let _ = writeln!(out, "\n    public Node{c} child{c}() {{\n        return this.c{c};\n    }}");
        let _ = writeln!(out, "\n    public int peer{c}(Node{c} other) {{");
        let _ = writeln!(out, "        return other.step(1) + this.acc;\n    }}");
    }
    let _ = writeln!(out, "}}\n");
}

fn main_class(out: &mut String, rng: &mut ChaCha8Rng, nodes: &[Node]) {
    let _ = writeln!(out, "@Untrusted\npublic class Main {{\n    public static void main(String[] args) {{");
    let n_roots = rng.gen_range(1..=3);
    let mut roots = Vec::new();
    for r in 0..n_roots {
        let class = rng.gen_range(0..nodes.len());
        let seed = rng.gen_range(0..1000);
        let _ = writeln!(out, "        Node{class} n{r} = new Node{class}({seed}, \"t{r}\");");
        roots.push(class);
    }
    let _ = writeln!(out, "        List<Integer> xs = new List<Integer>();");
    for _ in 0..rng.gen_range(0..6) {
        let _ = writeln!(out, "        xs.append({});", rng.gen_range(0..100));
    }
    let _ = writeln!(out, "        Note note = new Note({}, \"k\");", rng.gen_range(0..100));

    let mut saved = vec![false; n_roots];
    let mut fresh = 0;
    for _ in 0..rng.gen_range(5..=15) {
        let r = rng.gen_range(0..n_roots);
        let children = &nodes[roots[r]].children;
        let line = match rng.gen_range(0..10) {
            0 => format!("print(n{r}.step({}));", rng.gen_range(0..100)),
            1 => format!("print(n{r}.label(note));"),
            2 => {
                fresh += 1;
                format!("Note s{fresh} = n{r}.snapshot();\n        print(s{fresh}.show());")
            }
            3 => format!("print(n{r}.total(xs));"),
            4 => format!("n{r}.report();"),
            5 => {
                saved[r] = true;
                format!("n{r}.save();")
            }
            6 if saved[r] => format!("print(file_read(\"t{r}.txt\"));"),
            7 if !children.is_empty() => {
                let c = children[rng.gen_range(0..children.len())];
                fresh += 1;
                format!("Node{c} k{fresh} = n{r}.child{c}();\n        print(k{fresh}.step(2));")
            }
            8 if !children.is_empty() => {
                let c = children[rng.gen_range(0..children.len())];
                format!("print(n{r}.peer{c}(n{r}.child{c}()));")
            }
            9 => "gc();".to_string(),
            _ => format!("if (n{r}.big()) {{ print(\"big\"); }} else {{ print(\"small\"); }}"),
        };
        let _ = writeln!(out, "        {line}");
    }
    let _ = writeln!(out, "    }}\n}}");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::validate;

    #[test]
    fn corpus_programs_validate() {
        for (seed, program) in generate_corpus(0, 50) {
            let report = validate(&program);
            assert!(report.is_ok(), "seed {seed}: {report:?}\n{}", corpus_source(seed));
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        assert_eq!(corpus_source(17), corpus_source(17));
        assert_ne!(corpus_source(17), corpus_source(18));
    }
}
