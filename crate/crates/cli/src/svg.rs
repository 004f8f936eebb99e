//! Bar chart of average waiting time per policy.
//!
//! Geometry uses integer arithmetic only, so the output bytes are stable
//! across platforms.

use std::fmt::Write;

use baas_sim::MetricsReport;

const PLOT_HEIGHT: u128 = 300;
const TOP: u128 = 60;
const LEFT: u128 = 80;
const BAR_WIDTH: u128 = 80;
const BAR_GAP: u128 = 60;

/// Renders one `<rect class="bar">` per report, in fixed policy order, with
/// heights proportional to `avg_wait_ms`.
pub fn render_comparison_chart(reports: &[MetricsReport]) -> String {
    let mut rows: Vec<&MetricsReport> = reports.iter().collect();
    rows.sort_by_key(|r| r.policy);

    let width = LEFT + BAR_GAP + rows.len() as u128 * (BAR_WIDTH + BAR_GAP);
    let height = TOP + PLOT_HEIGHT + 60;
    let baseline = TOP + PLOT_HEIGHT;
    let max_milli = rows.iter().map(|r| r.avg_wait_milli()).max().unwrap_or(0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    svg.push_str("  <title>Average waiting time by scheduling policy</title>\n");
    let _ = writeln!(
        svg,
        r#"  <rect class="background" x="0" y="0" width="{width}" height="{height}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"  <text x="{}" y="30" font-size="16" text-anchor="middle">Average waiting time (ms)</text>"#,
        width / 2
    );
    let _ = writeln!(
        svg,
        r#"  <line x1="{LEFT}" y1="{baseline}" x2="{}" y2="{baseline}" stroke="black"/>"#,
        width - BAR_GAP / 2
    );
    let _ = writeln!(
        svg,
        r#"  <line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{baseline}" stroke="black"/>"#
    );

    for (i, r) in rows.iter().enumerate() {
        let milli = r.avg_wait_milli();
        // bar height in tenths of a pixel
        let tenths = (PLOT_HEIGHT * 10 * milli)
            .checked_div(max_milli)
            .unwrap_or(0);
        let x = LEFT + BAR_GAP + i as u128 * (BAR_WIDTH + BAR_GAP);
        let y_tenths = baseline * 10 - tenths;
        let cx = x + BAR_WIDTH / 2;
        let label = r.avg_wait_fixed3();
        let _ = writeln!(
            svg,
            r##"  <rect class="bar" data-policy="{p}" x="{x}" y="{}" width="{BAR_WIDTH}" height="{}" fill="#4a78b5"/>"##,
            tenths_str(y_tenths),
            tenths_str(tenths),
            p = r.policy,
        );
        let _ = writeln!(
            svg,
            r#"  <text class="value" x="{cx}" y="{}" font-size="12" text-anchor="middle">{label}</text>"#,
            tenths_str(y_tenths.saturating_sub(60)),
        );
        let _ = writeln!(
            svg,
            r#"  <text class="label" x="{cx}" y="{}" font-size="14" text-anchor="middle">{}</text>"#,
            baseline + 22,
            r.policy,
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn tenths_str(v: u128) -> String {
    format!("{}.{}", v / 10, v % 10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use baas_sim::PolicyId;

    fn report(policy: PolicyId, total_wait: u128) -> MetricsReport {
        MetricsReport {
            policy,
            n_tasks: 4,
            total_wait_ms: total_wait,
            max_wait_ms: 0,
            makespan_ms: 0,
            load_cov: 0.0,
            load_cov_milli: 0,
            starvation_threshold_ms: 0,
            starved_count: 0,
            per_vm_busy_ms: vec![],
        }
    }

    #[test]
    fn bars_in_policy_order_with_proportional_heights() {
        let svg = render_comparison_chart(&[
            report(PolicyId::Hybrid, 100_000),
            report(PolicyId::Fcfs, 200_000),
        ]);
        let fcfs = svg.find(r#"data-policy="fcfs""#).unwrap();
        let hybrid = svg.find(r#"data-policy="hybrid""#).unwrap();
        assert!(fcfs < hybrid);
        assert!(svg.contains(r#"height="300.0""#));
        assert!(svg.contains(r#"height="150.0""#));
        assert!(svg.contains(">50000.000<"));
        assert!(svg.contains(">25000.000<"));
        assert_eq!(svg.matches(r#"class="bar""#).count(), 2);
    }

    #[test]
    fn all_zero_waits_draw_flat_bars() {
        let svg = render_comparison_chart(&[report(PolicyId::Sjf, 0)]);
        assert!(svg.contains(r#"height="0.0""#));
        assert_eq!(svg.matches(r#"class="bar""#).count(), 1);
    }
}
