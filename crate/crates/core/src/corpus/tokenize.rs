use alloc::string::String;
use alloc::vec::Vec;

/// Lowercases `body` and splits it on every non-alphanumeric character.
pub fn tokenize(body: &str) -> Vec<String> {
    body.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.chars().flat_map(char::to_lowercase).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(tokenize("Is Obamacare failing?"), ["is", "obamacare", "failing"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("CBO predicted in 2009,"), ["cbo", "predicted", "in", "2009"]);
        assert!(tokenize("?! ... --").is_empty());
        assert_eq!(tokenize("Ünïcode ÇAFÉ"), ["ünïcode", "çafé"]);
    }
}
