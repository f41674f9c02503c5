use std::fmt::Write;

use crate::decomposition::DecompositionDump;
use crate::geometry::Environment;
use crate::orchestrator::{PlanResult, Problem};

/// Sampling interval for drawing kinodynamic trajectories.
const DRAW_DT: f64 = 0.1;
/// Pixels per workspace unit.
const SCALE: f64 = 40.0;

/// What to draw on top of the environment. Start and goal markers come from
/// `problem`; the decomposition grid from `decomposition`.
#[derive(Default, Clone, Copy)]
pub struct SvgInput<'a> {
    pub result: Option<&'a PlanResult>,
    pub problem: Option<&'a Problem>,
    pub decomposition: Option<&'a DecompositionDump>,
}

fn color(i: usize) -> String {
    // Golden-angle hue steps keep neighboring indices far apart.
    let hue = (i as f64 * 137.508) % 360.0;
    format!("hsl({hue:.1},70%,42%)")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the environment with y pointing up. Elements carry classes
/// `frame`, `obstacle`, `leaf`, `trajectory`, `start` and `goal`.
pub fn render_svg(env: &Environment, input: SvgInput<'_>) -> String {
    let b = env.bounds;
    let stroke = 0.05;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{:.0}" height="{:.0}" viewBox="{} {} {} {}">"#,
        b.width() * SCALE,
        b.height() * SCALE,
        b.xmin - stroke,
        b.ymin - stroke,
        b.width() + 2.0 * stroke,
        b.height() + 2.0 * stroke
    );
    let _ = writeln!(s, "<title>{}</title>", escape(&env.name));
    let _ = writeln!(s, r#"<g transform="translate(0 {}) scale(1 -1)">"#, b.ymin + b.ymax);
    let rect = |s: &mut String, class: &str, r: &crate::geometry::Rect, style: &str| {
        let _ = writeln!(
            s,
            r#"<rect class="{class}" x="{}" y="{}" width="{}" height="{}" {style}/>"#,
            r.xmin,
            r.ymin,
            r.width(),
            r.height()
        );
    };
    rect(&mut s, "frame", &b, &format!(r#"fill="white" stroke="black" stroke-width="{stroke}""#));
    if let Some(d) = input.decomposition {
        s += "<g class=\"decomposition\">\n";
        for leaf in &d.leaves {
            let fill = if leaf.occupied { "#f2d0d0" } else { "none" };
            rect(&mut s, "leaf", &leaf.rect, &format!(r##"fill="{fill}" stroke="#9aa" stroke-width="0.02""##));
        }
        s += "</g>\n";
    }
    s += "<g class=\"obstacles\">\n";
    for o in &env.obstacles {
        rect(&mut s, "obstacle", o, r##"fill="#444""##);
    }
    s += "</g>\n";
    if let Some(r) = input.result {
        s += "<g class=\"trajectories\">\n";
        for (i, t) in r.trajectories.iter().enumerate() {
            let pts: Vec<String> = t.polyline(DRAW_DT).iter().map(|(x, y)| format!("{x:.4},{y:.4}")).collect();
            let _ = writeln!(
                s,
                r#"<polyline class="trajectory" data-robot="{}" points="{}" fill="none" stroke="{}" stroke-width="0.08"/>"#,
                t.robot,
                pts.join(" "),
                color(i)
            );
        }
        s += "</g>\n";
    }
    if let Some(p) = input.problem {
        s += "<g class=\"markers\">\n";
        for (i, robot) in p.robots.iter().enumerate() {
            let (st, g) = (&p.starts[i], &p.goals[i]);
            let c = color(i);
            let _ = writeln!(
                s,
                r#"<circle class="start" cx="{}" cy="{}" r="{}" fill="{c}" fill-opacity="0.35" stroke="{c}" stroke-width="0.05"/>"#,
                st.x, st.y, robot.radius
            );
            let _ = writeln!(
                s,
                r#"<circle class="goal" cx="{}" cy="{}" r="{}" fill="none" stroke="{c}" stroke-width="0.05" stroke-dasharray="0.15 0.1"/>"#,
                g.x, g.y, robot.radius
            );
        }
        s += "</g>\n";
    }
    s += "</g>\n</svg>\n";
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Configuration, Rect, RobotModel};
    use crate::orchestrator::{plan_cipher, PlannerConfig};

    fn count(doc: &roxmltree::Document, class: &str) -> usize {
        doc.descendants().filter(|n| n.attribute("class") == Some(class)).count()
    }

    #[test]
    fn empty_environment_draws_only_the_frame() {
        let env = Environment::empty("a <b> & c", Rect::new(0.0, 0.0, 5.0, 4.0)).unwrap();
        let svg = render_svg(&env, SvgInput::default());
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("rect")).count(), 1);
        assert_eq!(count(&doc, "frame"), 1);
        assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline") || n.has_tag_name("circle")).count(), 0);
    }

    #[test]
    fn one_polyline_per_robot_and_one_rect_per_leaf() {
        let env = Environment::new("e", Rect::new(0.0, 0.0, 16.0, 16.0), vec![Rect::new(7.0, 2.0, 9.0, 14.0)]).unwrap();
        let p = Problem {
            env: env.clone(),
            robots: vec![RobotModel::geometric(0.5).unwrap(); 3],
            starts: vec![Configuration::point(2.0, 2.0), Configuration::point(2.0, 8.0), Configuration::point(2.0, 14.0)],
            goals: vec![Configuration::point(14.0, 14.0), Configuration::point(14.0, 8.0), Configuration::point(14.0, 2.0)],
            time_limit: 20.0,
            seed: 5,
            goal_tolerance: 0.5,
        };
        let r = plan_cipher(&p, &PlannerConfig::default()).unwrap();
        assert!(r.is_success(), "{:?}", r.stats.failure);
        let d = PlannerConfig::default().decompose(&p).unwrap();
        let (d, _) = d.refine([d.project(&p.starts[0]).unwrap()].iter(), 1);
        let dump = d.dump();
        let svg = render_svg(
            &env,
            SvgInput {
                result: Some(&r),
                problem: Some(&p),
                decomposition: Some(&dump),
            },
        );
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(count(&doc, "trajectory"), 3);
        assert_eq!(count(&doc, "leaf"), d.leaf_count());
        assert_eq!(count(&doc, "obstacle"), 1);
        assert_eq!(count(&doc, "start"), 3);
        let goals: Vec<_> = doc.descendants().filter(|n| n.attribute("class") == Some("goal")).collect();
        assert_eq!(goals.len(), 3);
        assert!(goals.iter().all(|g| g.attribute("stroke-dasharray").is_some()));
        let colors: std::collections::BTreeSet<_> =
            doc.descendants().filter(|n| n.attribute("class") == Some("trajectory")).map(|n| n.attribute("stroke").unwrap().to_string()).collect();
        assert_eq!(colors.len(), 3);
    }
}
