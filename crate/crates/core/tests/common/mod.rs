//! Shared fixtures: a seeded four-table chain schema, a query corpus over
//! it, exact-cardinality hooks and helpers for fixture model workers.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use baihe::catalog::{Catalog, ColumnDef, DEFAULT_HISTOGRAM_BUCKETS, DEFAULT_MCV_LIMIT};
use baihe::config::EngineConfig;
use baihe::engine::{Engine, StatementResult};
use baihe::planner::{CardEstRequest, QuerySpec};
use baihe::session::SessionState;
use baihe::sql::{bind, parse, select_tq, QueryAst, SelectQuery, Statement};
use baihe::value::{ColumnKind, Value};

pub const SEED: u64 = 0x000B_A14E;

pub const CUSTOMERS: usize = 150;
pub const ORDERS: usize = 400;
pub const ITEMS: usize = 800;
pub const PRODUCTS: usize = 60;

/// Chain order: customers - orders - items - products.
pub const CHAIN: [&str; 4] = ["customers", "orders", "items", "products"];

/// Join condition between chain neighbours `i` and `i + 1`.
fn link(i: usize) -> &'static str {
    [
        "customers.id = orders.customer_id",
        "orders.id = items.order_id",
        "items.product_id = products.id",
    ][i]
}

/// Zipf(s) sampler over `0..n`.
pub fn zipf(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| 1.0 / (k as f64).powf(s))).expect("positive weights")
}

fn int(n: &str) -> ColumnDef {
    ColumnDef::new(n, ColumnKind::Int64)
}

/// Populate `cat` with the chain schema. Skewed columns (regions, order
/// owners, product popularity, categories) follow Zipf distributions.
pub fn populate(cat: &mut Catalog, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let float = |n: &str| ColumnDef::new(n, ColumnKind::Float64);
    cat.create_table_with_key("customers", vec![int("id"), int("region"), int("age")], Some("id"))
        .unwrap();
    cat.create_table_with_key(
        "orders",
        vec![int("id"), int("customer_id"), float("amount"), ColumnDef::new("status", ColumnKind::Text)],
        Some("id"),
    )
    .unwrap();
    cat.create_table_with_key(
        "items",
        vec![int("id"), int("order_id"), int("product_id"), int("qty")],
        Some("id"),
    )
    .unwrap();
    cat.create_table_with_key("products", vec![int("id"), int("category"), float("price")], Some("id"))
        .unwrap();

    let region = zipf(10, 1.1);
    let owner = zipf(CUSTOMERS, 0.8);
    let popular = zipf(PRODUCTS, 1.0);
    let category = zipf(8, 1.2);
    let statuses = ["paid", "shipped", "new", "returned"];
    let status = zipf(statuses.len(), 1.0);

    let customers = (0..CUSTOMERS as i64)
        .map(|i| vec![Value::Int(i), Value::Int(region.sample(&mut rng) as i64), Value::Int(rng.gen_range(18..80))])
        .collect();
    let orders = (0..ORDERS as i64)
        .map(|i| {
            vec![
                Value::Int(i),
                Value::Int(owner.sample(&mut rng) as i64),
                Value::Float((rng.gen_range(100..50_000) as f64) / 100.0),
                Value::Text(statuses[status.sample(&mut rng)].into()),
            ]
        })
        .collect();
    let items = (0..ITEMS as i64)
        .map(|i| {
            vec![
                Value::Int(i),
                Value::Int(rng.gen_range(0..ORDERS as i64)),
                Value::Int(popular.sample(&mut rng) as i64),
                Value::Int(rng.gen_range(1..=10)),
            ]
        })
        .collect();
    let products = (0..PRODUCTS as i64)
        .map(|i| {
            vec![
                Value::Int(i),
                Value::Int(category.sample(&mut rng) as i64),
                Value::Float((rng.gen_range(100..20_000) as f64) / 100.0),
            ]
        })
        .collect();
    cat.append_rows("customers", customers).unwrap();
    cat.append_rows("orders", orders).unwrap();
    cat.append_rows("items", items).unwrap();
    cat.append_rows("products", products).unwrap();
    for t in CHAIN {
        cat.analyze(t, DEFAULT_HISTOGRAM_BUCKETS, DEFAULT_MCV_LIMIT).unwrap();
    }
}

pub fn catalog() -> Catalog {
    let mut cat = Catalog::new();
    populate(&mut cat, SEED);
    cat
}

fn filter_for(table: &str, rng: &mut ChaCha8Rng) -> String {
    match (table, rng.gen_range(0..3)) {
        ("customers", 0) => format!("customers.region = {}", rng.gen_range(0..4)),
        ("customers", 1) => format!("customers.age < {}", rng.gen_range(25..60)),
        ("customers", _) => format!("customers.id = {}", rng.gen_range(0..CUSTOMERS)),
        ("orders", 0) => format!("orders.status = '{}'", ["paid", "shipped", "returned"][rng.gen_range(0..3)]),
        ("orders", 1) => format!("orders.amount > {}.5", rng.gen_range(50..450)),
        ("orders", _) => format!("orders.id = {}", rng.gen_range(0..ORDERS)),
        ("items", 0) => format!("items.qty >= {}", rng.gen_range(2..9)),
        ("items", 1) => format!("items.product_id = {}", rng.gen_range(0..6)),
        ("items", _) => format!("items.id <= {}", rng.gen_range(50..700)),
        ("products", 0) => format!("products.category = {}", rng.gen_range(0..4)),
        ("products", 1) => format!("products.price < {}.25", rng.gen_range(10..180)),
        ("products", _) => format!("products.id = {}", rng.gen_range(0..PRODUCTS)),
        _ => unreachable!("unknown table {table}"),
    }
}

/// Fifty queries: every connected chain segment (ten shapes) with five
/// filter variants each. The first variant of each shape has no filters.
pub fn corpus() -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x5EED);
    let mut out = Vec::new();
    for len in 1..=4 {
        for start in 0..=(4 - len) {
            let tables = &CHAIN[start..start + len];
            for variant in 0..5 {
                let mut conds: Vec<String> = (start..start + len - 1).map(|i| link(i).to_string()).collect();
                let nfilters = if variant == 0 { 0 } else { 1 + variant % 2 };
                for _ in 0..nfilters {
                    let t = tables[rng.gen_range(0..tables.len())];
                    conds.push(filter_for(t, &mut rng));
                }
                // Larger joins are counted rather than listed.
                let list = if len >= 3 || variant % 2 == 1 { "COUNT(*)" } else { "*" };
                let mut sql = format!("SELECT {list} FROM {}", tables.join(", "));
                if !conds.is_empty() {
                    sql.push_str(" WHERE ");
                    sql.push_str(&conds.join(" AND "));
                }
                out.push(sql);
            }
        }
    }
    out
}

pub fn select(cat: &Catalog, sql: &str) -> SelectQuery {
    let Statement::Query(ast) = parse(sql).unwrap_or_else(|e| panic!("{sql}: {e}")) else {
        panic!("not a query: {sql}")
    };
    match bind(&ast, cat).unwrap_or_else(|e| panic!("{sql}: {e}")) {
        QueryAst::Select(q) => q,
        other => panic!("not a SELECT: {other:?}"),
    }
}

/// Exact selectivity of a planner subproblem: true result size over the
/// cross-product size of its tables.
pub fn true_selectivity(cat: &Catalog, req: &CardEstRequest) -> f64 {
    let n = cat.true_cardinality(&req.tables, &req.predicates).unwrap() as f64;
    let product: f64 = req
        .tables
        .iter()
        .map(|t| cat.table(t).unwrap().def().row_count as f64)
        .product();
    n / product
}

/// Exact result size of a whole query.
pub fn true_count(cat: &Catalog, q: &SelectQuery) -> u64 {
    let (tables, preds) = select_tq(q).unwrap();
    cat.true_cardinality(&tables, &preds).unwrap()
}

pub fn query_spec(q: &SelectQuery) -> QuerySpec {
    let (tables, preds) = select_tq(q).unwrap();
    QuerySpec::new(&tables, &preds)
}

pub const WORKER: &str = env!("CARGO_BIN_EXE_baihe-test-worker");

/// Create a model directory whose entry is the fixture worker run with
/// `args`.
pub fn fixture_model(root: &Path, name: &str, task: &str, args: &[&str]) -> PathBuf {
    let dir = root.join("fixtures").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    let mut all = vec!["--tasks".to_string(), task.to_string()];
    all.extend(args.iter().map(|a| a.to_string()));
    let manifest = serde_json::json!({
        "name": name,
        "task": task,
        "entry": WORKER,
        "protocol_version": 1,
        "args": all,
    });
    std::fs::write(dir.join("manifest"), manifest.to_string()).unwrap();
    dir
}

pub fn open_engine(data_dir: &Path) -> Engine {
    Engine::open(EngineConfig::with_data_dir(data_dir)).unwrap()
}

/// Engine over the seeded schema.
pub fn schema_engine(data_dir: &Path) -> Engine {
    let mut e = open_engine(data_dir);
    populate(e.catalog_mut(), SEED);
    e
}

pub fn run(engine: &mut Engine, session: &mut SessionState, sql: &str) -> StatementResult {
    engine
        .execute(session, sql)
        .unwrap_or_else(|e| panic!("{sql}: {e}"))
}

/// Register and start a fixture model, returning its directory.
pub fn deploy(
    engine: &mut Engine,
    session: &mut SessionState,
    root: &Path,
    name: &str,
    task: &str,
    args: &[&str],
) -> PathBuf {
    let dir = fixture_model(root, name, task, args);
    let scope = CHAIN.map(|t| format!("'{t}'")).join(", ");
    run(
        engine,
        session,
        &format!(
            "CALL REGISTER_MODEL('{name}', '{task}', {{{scope}}}, '{name}_stats', '{}')",
            dir.display()
        ),
    );
    run(engine, session, &format!("CALL START_MODEL('{name}')"));
    dir
}

/// Rows of a result as sortable strings, for order-insensitive comparison.
pub fn sorted_rows(result: &StatementResult) -> Vec<String> {
    let StatementResult::Rows(out) = result else {
        panic!("expected rows, got {result:?}")
    };
    let mut rows: Vec<String> = out.rows.iter().map(|r| format!("{r:?}")).collect();
    rows.sort();
    rows
}

/// Number of result tuples a query produced: the COUNT(*) value or the
/// number of listed rows.
pub fn result_size(result: &StatementResult) -> u64 {
    let StatementResult::Rows(out) = result else {
        panic!("expected rows, got {result:?}")
    };
    if out.columns == ["count"] {
        match out.rows[0][0] {
            Value::Int(n) => n as u64,
            ref v => panic!("count is {v:?}"),
        }
    } else {
        out.rows.len() as u64
    }
}
