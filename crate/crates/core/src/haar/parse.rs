use std::path::Path;

use roxmltree::{Document, Node};

use super::{CascadeError, CascadeModel, HaarFeature, HaarRect, NodeChild, Stage, Tree, TreeNode};

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children()
        .find(|c| c.is_element() && c.has_tag_name(name))
}

fn require<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Result<Node<'a, 'i>, CascadeError> {
    child(node, name).ok_or_else(|| CascadeError::MissingElement(name.to_string()))
}

fn items<'a, 'i>(node: Node<'a, 'i>) -> impl Iterator<Item = Node<'a, 'i>> {
    node.children()
        .filter(|c| c.is_element() && c.has_tag_name("_"))
}

fn text<'a>(node: Node<'a, '_>) -> &'a str {
    node.text().unwrap_or("").trim()
}

fn number<T: std::str::FromStr>(node: Node<'_, '_>, what: &str) -> Result<T, CascadeError> {
    text(node)
        .parse()
        .map_err(|_| CascadeError::Invalid(format!("bad {what} value {:?}", text(node))))
}

/// Legacy files mark real numbers with a trailing dot ("-1.").
fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>()
        .ok()
        .or_else(|| s.strip_suffix('.').and_then(|t| t.parse().ok()))
        .filter(|v| v.is_finite())
}

/// Finds the element carrying `<size>` and `<stages>`: either the document
/// root itself or one of its element children.
fn cascade_root<'a, 'i>(doc: &'a Document<'i>) -> Result<Node<'a, 'i>, CascadeError> {
    let root = doc.root_element();
    let has_stages = |n: &Node| child(*n, "stages").is_some();
    if has_stages(&root) {
        return Ok(root);
    }
    root.children()
        .filter(|c| c.is_element())
        .find(has_stages)
        .ok_or_else(|| CascadeError::MissingElement("stages".into()))
}

/// Parses a legacy ("old-style") Haar cascade.
pub fn parse_cascade(xml: &str) -> Result<CascadeModel, CascadeError> {
    let doc = Document::parse(xml).map_err(|e| CascadeError::MalformedXml(e.to_string()))?;
    let root = cascade_root(&doc)?;

    let size = require(root, "size")?;
    let dims: Vec<usize> = text(size)
        .split_whitespace()
        .map(|t| t.parse())
        .collect::<Result<_, _>>()
        .map_err(|_| CascadeError::Invalid(format!("bad <size> {:?}", text(size))))?;
    let (base_w, base_h) = match dims[..] {
        [w, h] if w > 0 && h > 0 => (w, h),
        _ => {
            return Err(CascadeError::Invalid(format!(
                "bad <size> {:?}",
                text(size)
            )))
        }
    };

    let mut stages = Vec::new();
    for (si, stage_node) in items(require(root, "stages")?).enumerate() {
        let mut trees = Vec::new();
        for tree_node in items(require(stage_node, "trees")?) {
            let nodes = items(tree_node)
                .map(|n| parse_node(n, base_w, base_h))
                .collect::<Result<Vec<_>, _>>()?;
            let tree = Tree { nodes };
            validate_tree(&tree, si)?;
            trees.push(tree);
        }
        if trees.is_empty() {
            return Err(CascadeError::Invalid(format!("stage {si} has no trees")));
        }
        let threshold = number(require(stage_node, "stage_threshold")?, "stage_threshold")?;
        stages.push(Stage { trees, threshold });
    }
    if stages.is_empty() {
        return Err(CascadeError::Invalid("cascade has no stages".into()));
    }
    Ok(CascadeModel {
        base_w,
        base_h,
        stages,
    })
}

pub fn load_cascade(path: impl AsRef<Path>) -> Result<CascadeModel, CascadeError> {
    parse_cascade(&std::fs::read_to_string(path)?)
}

fn parse_node(node: Node<'_, '_>, base_w: usize, base_h: usize) -> Result<TreeNode, CascadeError> {
    let feature_node = require(node, "feature")?;
    if let Some(t) = child(feature_node, "tilted") {
        if text(t) != "0" {
            return Err(CascadeError::UnsupportedFeature("tilted rectangle".into()));
        }
    }
    let mut rects = Vec::new();
    for r in items(require(feature_node, "rects")?) {
        let fields: Vec<&str> = text(r).split_whitespace().collect();
        if fields.len() != 5 {
            return Err(CascadeError::Invalid(format!("bad rect {:?}", text(r))));
        }
        let geom: Vec<usize> = fields[..4]
            .iter()
            .map(|f| {
                parse_real(f)
                    .filter(|v| *v >= 0.0 && v.fract() == 0.0)
                    .map(|v| v as usize)
            })
            .collect::<Option<_>>()
            .ok_or_else(|| CascadeError::Invalid(format!("bad rect {:?}", text(r))))?;
        let weight = parse_real(fields[4])
            .ok_or_else(|| CascadeError::Invalid(format!("bad rect weight {:?}", fields[4])))?;
        let rect = HaarRect {
            x: geom[0],
            y: geom[1],
            w: geom[2],
            h: geom[3],
            weight,
        };
        if rect.w == 0 || rect.h == 0 || rect.x + rect.w > base_w || rect.y + rect.h > base_h {
            return Err(CascadeError::Invalid(format!(
                "rect {:?} outside the {base_w}x{base_h} window",
                text(r)
            )));
        }
        rects.push(rect);
    }
    if !(2..=3).contains(&rects.len()) {
        return Err(CascadeError::Invalid(format!(
            "feature has {} rects, expected 2 or 3",
            rects.len()
        )));
    }
    if !rects.iter().any(|r| r.weight < 0.0) || !rects.iter().any(|r| r.weight > 0.0) {
        return Err(CascadeError::Invalid(
            "feature weights need both signs".into(),
        ));
    }
    let threshold = parse_real(text(require(node, "threshold")?))
        .ok_or_else(|| CascadeError::Invalid("bad node threshold".into()))?;
    Ok(TreeNode {
        feature: HaarFeature { rects },
        threshold,
        left: parse_child(node, "left")?,
        right: parse_child(node, "right")?,
    })
}

fn parse_child(node: Node<'_, '_>, side: &str) -> Result<NodeChild, CascadeError> {
    if let Some(v) = child(node, &format!("{side}_val")) {
        return parse_real(text(v))
            .map(NodeChild::Leaf)
            .ok_or_else(|| CascadeError::Invalid(format!("bad {side}_val")));
    }
    if let Some(n) = child(node, &format!("{side}_node")) {
        return Ok(NodeChild::Node(number(n, &format!("{side}_node"))?));
    }
    Err(CascadeError::MissingElement(format!("{side}_val")))
}

/// Every node must be reachable from the root without revisiting a node.
fn validate_tree(tree: &Tree, stage: usize) -> Result<(), CascadeError> {
    if tree.nodes.is_empty() {
        return Err(CascadeError::Invalid(format!(
            "empty tree in stage {stage}"
        )));
    }
    let n = tree.nodes.len();
    // iterative DFS tracking the current path
    let mut on_path = vec![false; n];
    let mut done = vec![false; n];
    let mut stack = vec![(0usize, 0u8)];
    while let Some((idx, state)) = stack.pop() {
        if state == 0 {
            if on_path[idx] {
                return Err(CascadeError::Invalid(format!(
                    "cycle in stage {stage} tree"
                )));
            }
            if done[idx] {
                continue;
            }
            on_path[idx] = true;
            stack.push((idx, 1));
            for c in [tree.nodes[idx].left, tree.nodes[idx].right] {
                if let NodeChild::Node(ci) = c {
                    if ci >= n {
                        return Err(CascadeError::Invalid(format!(
                            "node index {ci} out of range in stage {stage}"
                        )));
                    }
                    if on_path[ci] {
                        return Err(CascadeError::Invalid(format!(
                            "cycle in stage {stage} tree"
                        )));
                    }
                    stack.push((ci, 0));
                }
            }
        } else {
            on_path[idx] = false;
            done[idx] = true;
        }
    }
    Ok(())
}
