var account = {
  owner: "ada",
  balance: 40,
  deposit: function (amount) {
    this.balance += amount;
    return this.owner + ":" + this.balance;
  },
};
console.log(account.deposit(2));
var other = { owner: "bob", balance: 1, deposit: account.deposit };
console.log(other.deposit(5));
