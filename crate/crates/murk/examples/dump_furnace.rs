fn main() {
    println!("{}", murk::scene::presets::furnace_sphere().to_json_pretty());
}
